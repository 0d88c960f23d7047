"""Small deterministic scenes used by the tests, demos and CLI smoke runs."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np

from .fields import GridSpec, Image, ParticleSet, ScalarGrid
from .render import RenderConfig
from .style import FilterBank, StyleTarget, default_bank

__all__ = ["TinyInstance", "tiny_instance", "dot_texture", "plume_grid", "plume_fixture", "PLUME_SEED"]

PLUME_SEED = 1234


def dot_texture(size=16, period=4) -> Image:
    """Grayscale dot lattice in ``[0, 1]``."""
    i, j = np.meshgrid(np.arange(size), np.arange(size), indexing="xy")
    px = 0.5 + 0.25 * (np.cos(2 * np.pi * i / period) + np.cos(2 * np.pi * j / period))
    return Image(px)


@dataclass(frozen=True)
class TinyInstance:
    spec: GridSpec
    particles: ParticleSet
    bank: FilterBank
    target: StyleTarget
    style_image: Image
    h: float
    render: RenderConfig
    seed: int


def tiny_instance(seed: int = 7, mean_density: float = 20.0) -> TinyInstance:
    """25 particles on a jittered 5x5 lattice inside a 16x16 grid.

    Densities are ``mean_density`` with +-15% noise; the emission coefficient
    maps the mean to an image value of 0.75. The style target is a dot
    lattice seen through the default filter bank.
    """
    rng = np.random.default_rng(seed)
    spec = GridSpec((16, 16, 1))
    g = 3.5 + 2.0 * np.arange(5)
    x, y = np.meshgrid(g, g, indexing="ij")
    pos = np.stack([x.ravel(), y.ravel()], axis=1) + rng.uniform(-0.3, 0.3, (25, 2))
    rho = mean_density * (1.0 + 0.15 * rng.uniform(-1.0, 1.0, 25))
    bank = default_bank(0)
    style = dot_texture()
    return TinyInstance(
        spec=spec,
        particles=ParticleSet(pos, {"rho0": rho, "mass": np.ones(25)}),
        bank=bank,
        target=StyleTarget.from_image(style, bank, "dot lattice, period 4"),
        style_image=style,
        h=1.5,
        render=RenderConfig("smoke", gamma=1.0, emission=0.75 / mean_density),
        seed=seed,
    )


def plume_grid(n=16, seed=PLUME_SEED) -> ScalarGrid:
    """A rising, wavering smoke column with a few detached puffs, values in ``[0, 1]``."""
    rng = np.random.default_rng(seed)
    spec = GridSpec((n, n, n))
    p = spec.node_positions() / (n - 1)
    x, y, z = p[:, 0], p[:, 1], p[:, 2]
    cx = 0.5 + 0.12 * np.sin(2.5 * np.pi * y + 0.3)
    cz = 0.5 + 0.10 * np.cos(2.0 * np.pi * y)
    width = 0.08 + 0.12 * y
    col = np.exp(-((x - cx) ** 2 + (z - cz) ** 2) / (2 * width**2)) * (0.35 + 0.65 * np.exp(-3.0 * (y - 0.25) ** 2))
    col *= y > 0.05
    puffs = np.zeros_like(x)
    for _ in range(4):
        c = rng.uniform(0.2, 0.8, 3)
        s = rng.uniform(0.05, 0.09)
        puffs += rng.uniform(0.4, 0.8) * np.exp(-np.sum((p - c) ** 2, axis=1) / (2 * s * s))
    ripple = 1.0 + 0.25 * np.sin(9.0 * x + 7.0 * y) * np.cos(8.0 * z)
    d = (col + puffs) * ripple
    d[d < 0.02] = 0.0
    d = d / d.max()
    return ScalarGrid.from_flat(spec, d)


def plume_fixture() -> ScalarGrid:
    """The bundled 16^3 plume density file."""
    from .io import read_grid

    with resources.as_file(resources.files("fluidstyle") / "data" / "plume16.lnsg") as path:
        return read_grid(path)
