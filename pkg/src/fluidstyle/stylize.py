"""Per-frame stylization of particle attributes.

Each optimized attribute (density, colour or position) is splatted to the
grid, rendered from every view and scored with the style loss; the density
and position regularizers are added with their own weights. Gradients flow
back analytically through the renderer and transfers to per-particle deltas,
which Adam updates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import DivergenceError, InvalidArgument
from .fields import GridSpec, ParticleSet, ScalarGrid
from .optim import AdamState, adam_step
from .render import RenderConfig, ViewConfig, render_backward, render_forward
from .resim import level_radii, rest_density_grid
from .style import FilterBank, StyleTarget, reg_density, reg_position, style_loss_and_grad
from .transfer import kernel_pairs, p2g_backward, p2g_forward, sph_density_backward, sph_density_forward

__all__ = [
    "ATTRIBUTES",
    "COLOR_CHANNELS",
    "StylizeConfig",
    "FrameResult",
    "Fluid",
    "stylize_frame",
    "stylize_fluids",
    "apply_deltas",
]

ATTRIBUTES = ("density", "color", "position")
COLOR_CHANNELS = ("color_r", "color_g", "color_b")


@dataclass(frozen=True)
class StylizeConfig:
    """Everything that defines a single-frame objective for one fluid.

    ``h`` is the support scale of density level 0 (level ``i`` uses
    ``h / 2**i``), of the colour splat and of the SPH density used for the
    position attribute. ``rest_density`` is the position-regularizer target;
    when omitted it is built from the frame's unperturbed positions.
    """

    bank: FilterBank
    target: StyleTarget
    h: float = 2.0
    views: tuple = (ViewConfig("+z"),)
    render: RenderConfig = RenderConfig()
    attributes: tuple = ("density",)
    attribute_weights: Mapping[str, float] | None = None
    layer_weights: Mapping[int, float] | None = None
    density_reg: float = 0.0
    position_reg: float = 0.0
    rest_density: ScalarGrid | None = None
    iterations: int = 200
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        views = tuple(v if isinstance(v, ViewConfig) else ViewConfig(v) for v in self.views)
        if not views:
            raise InvalidArgument("at least one view is required")
        attrs = tuple(self.attributes)
        if not attrs or any(a not in ATTRIBUTES for a in attrs) or len(set(attrs)) != len(attrs):
            raise InvalidArgument(f"attributes must be a non-empty subset of {ATTRIBUTES}, got {attrs}")
        weights = {a: 1.0 for a in attrs}
        weights.update(dict(self.attribute_weights or {}))
        if set(weights) != set(attrs):
            raise InvalidArgument(f"attribute weights given for {sorted(weights)}, attributes are {sorted(attrs)}")
        for name, val in (*weights.items(), ("density_reg", self.density_reg), ("position_reg", self.position_reg)):
            if not np.isfinite(val) or val < 0:
                raise InvalidArgument(f"weight {name} must be finite and >= 0, got {val}")
        if int(self.iterations) != self.iterations or self.iterations < 0:
            raise InvalidArgument(f"iterations must be a non-negative integer, got {self.iterations}")
        if not np.isfinite(self.h) or self.h <= 0:
            raise InvalidArgument(f"h must be finite and > 0, got {self.h}")
        if "color" in attrs and self.render.mode != "smoke":
            raise InvalidArgument("colour stylization needs the smoke renderer")
        object.__setattr__(self, "views", views)
        object.__setattr__(self, "attributes", attrs)
        object.__setattr__(self, "attribute_weights", weights)
        object.__setattr__(self, "iterations", int(self.iterations))

    def adam(self) -> AdamState:
        return AdamState(self.lr, self.beta1, self.beta2, self.adam_eps)


@dataclass(frozen=True)
class Fluid:
    """One particle set taking part in a (possibly multi-fluid) stylization."""

    particles: ParticleSet
    config: StylizeConfig
    base: ScalarGrid | None = None


@dataclass
class FrameResult:
    deltas: dict  # attribute -> array; density (N,), color (N, 3), position (N, D)
    trace: list  # one record per evaluation, iterations + 1 in total
    density: ScalarGrid | None = None  # this fluid's density field at the final deltas
    images: list = field(default_factory=list)  # final renders, one per view and attribute


def _zero_deltas(particles: ParticleSet, attrs):
    n, d = particles.count, particles.dim
    shapes = {"density": (n,), "color": (n, 3), "position": (n, d)}
    return {a: np.zeros(shapes[a]) for a in attrs}


def _check_channels(particles: ParticleSet, config: StylizeConfig):
    attrs = config.attributes
    if ("density" in attrs or "color" in attrs) and "rho0" not in particles.channels:
        raise InvalidArgument("density and colour stylization need a 'rho0' particle channel")
    if "color" in attrs:
        missing = [c for c in COLOR_CHANNELS if c not in particles.channels]
        if missing:
            raise InvalidArgument(f"colour stylization needs particle channels {missing}")


class _NonFinite(Exception):
    def __init__(self, value):
        self.value = value


class _Problem:
    def __init__(self, fluids: Sequence[Fluid], spec: GridSpec):
        if not fluids:
            raise InvalidArgument("nothing to stylize")
        self.fluids = list(fluids)
        self.spec = spec
        dims = {f.particles.dim for f in self.fluids}
        if dims != {spec.dim}:
            raise InvalidArgument(f"particle dimensions {sorted(dims)} do not match the {spec.dim}D grid")
        for f in self.fluids:
            _check_channels(f.particles, f.config)
            if f.base is not None and f.base.spec != spec:
                raise InvalidArgument("base grid does not match the stylization grid")
        if len({f.config.h for f in self.fluids}) != 1:
            raise InvalidArgument("all fluids in a joint stylization must share h")
        self.h = self.fluids[0].config.h
        self.moves = any("position" in f.config.attributes for f in self.fluids)
        sizes = [f.particles.count for f in self.fluids]
        starts = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
        self.slices = [slice(int(a), int(b)) for a, b in zip(starts[:-1], starts[1:])]
        self.n = int(starts[-1])
        self.x0 = np.concatenate([f.particles.positions for f in self.fluids]).reshape(self.n, spec.dim)
        n_levels = max(len(f.particles.density_levels()) for f in self.fluids)
        self.radii = level_radii(self.h, max(n_levels, 1))
        self._pairs = {}
        self.rest = []
        for f in self.fluids:
            rest = f.config.rest_density
            if rest is None and "position" in f.config.attributes and f.config.position_reg > 0:
                rest = rest_density_grid(f.particles.positions, self.h, spec, f.particles.masses())
            self.rest.append(rest)

    def _pairs_for(self, x, r):
        if r not in self._pairs:
            self._pairs[r] = kernel_pairs(x, r, self.spec)
        return self._pairs[r]

    def _splat(self, x, sl, values, r):
        full = np.zeros(self.n)
        full[sl] = values
        return p2g_forward(x, full, r, self.spec, self._pairs_for(x, r))

    def evaluate(self, deltas: list, keep_images=False):
        """Total loss, per-term breakdown, per-fluid gradients and final fields."""
        spec = self.spec
        if self.moves:
            self._pairs = {}
        x = self.x0.copy()
        for f, sl, d in zip(self.fluids, self.slices, deltas):
            if "position" in d:
                x[sl] = x[sl] + d["position"]
        grad_x = np.zeros_like(x)
        total = 0.0
        parts = {"style": 0.0, "reg_density": 0.0, "reg_position": 0.0}
        grads, fields, images = [], [], []

        for fi, (f, sl, d) in enumerate(zip(self.fluids, self.slices, deltas)):
            cfg, p = f.config, f.particles
            attrs = cfg.attributes
            w = cfg.attribute_weights
            g = {k: np.zeros_like(v) for k, v in d.items()}
            imgs = []

            density = None
            level_caches = []
            if "density" in attrs or "color" in attrs:
                acc = np.zeros(spec.dims) if f.base is None else f.base.values.copy()
                for i, name in enumerate(p.density_levels()):
                    vals = p[name] + d["density"] if (i == 0 and "density" in d) else p[name]
                    grid, cache = self._splat(x, sl, vals, self.radii[i])
                    acc += grid.values
                    level_caches.append(cache)
                density = ScalarGrid(spec, acc)
            color_caches, color = [], None
            if "color" in attrs:
                color = []
                for c, name in enumerate(COLOR_CHANNELS):
                    grid, cache = self._splat(x, sl, p[name] + d["color"][:, c], self.radii[0])
                    color.append(grid)
                    color_caches.append(cache)
            sph = None
            if "position" in attrs:
                sph, sph_cache = sph_density_forward(x[sl], p.masses(), self.h, spec)

            g_density = np.zeros(spec.dims)
            g_color = [np.zeros(spec.dims) for _ in range(3)]
            g_sph = np.zeros(spec.dims)
            for view in cfg.views:
                for attr in attrs:
                    if attr == "density":
                        img, rc = render_forward(density, view, cfg.render)
                    elif attr == "color":
                        img, rc = render_forward(density, view, cfg.render, color)
                    else:
                        img, rc = render_forward(sph, view, cfg.render)
                    loss, g_img = style_loss_and_grad(img, cfg.bank, cfg.target, cfg.layer_weights)
                    if not np.isfinite(loss):
                        raise _NonFinite(loss)
                    total += w[attr] * loss
                    parts["style"] += w[attr] * loss
                    if keep_images:
                        imgs.append(img)
                    if w[attr] == 0:
                        continue
                    back = render_backward(rc, w[attr] * g_img)
                    if attr == "density":
                        g_density += back.values
                    elif attr == "color":
                        g_density += back[0].values
                        for c in range(3):
                            g_color[c] += back[1][c].values
                    else:
                        g_sph += back.values

            for i, cache in enumerate(level_caches):
                gv, gx = p2g_backward(cache, g_density)
                if i == 0 and "density" in g:
                    g["density"] += gv[sl]
                grad_x += gx
            for c, cache in enumerate(color_caches):
                gv, gx = p2g_backward(cache, g_color[c])
                g["color"][:, c] += gv[sl]
                grad_x += gx
            if sph is not None:
                grad_x[sl] += sph_density_backward(sph_cache, g_sph)

            if "density" in d:
                val, gr = reg_density(d["density"])
                parts["reg_density"] += val
                if cfg.density_reg > 0:
                    total += cfg.density_reg * val
                    g["density"] += cfg.density_reg * gr
            if "position" in d and self.rest[fi] is not None:
                val, gr = reg_position(x[sl], self.h, self.rest[fi], p.masses())
                parts["reg_position"] += val
                if cfg.position_reg > 0:
                    total += cfg.position_reg * val
                    grad_x[sl] += cfg.position_reg * gr

            grads.append(g)
            fields.append(density if density is not None else sph)
            images.append(imgs)

        for g, sl in zip(grads, self.slices):
            if "position" in g:
                g["position"] = grad_x[sl].copy()
        return total, parts, grads, fields, images


def stylize_fluids(fluids: Sequence[Fluid], spec: GridSpec, init: Sequence[Mapping] | None = None) -> list:
    """Jointly stylize several particle sets on one grid.

    Each fluid keeps its own objective and optimizer state. Splats are
    normalised over the union of all particles, so fluids only interact where
    their kernel supports overlap.
    """
    problem = _Problem(fluids, spec)
    iterations = {f.config.iterations for f in problem.fluids}
    if len(iterations) != 1:
        raise InvalidArgument("all fluids in a joint stylization must run the same number of iterations")
    iterations = iterations.pop()
    deltas = []
    for k, f in enumerate(problem.fluids):
        d = _zero_deltas(f.particles, f.config.attributes)
        if init is not None and init[k] is not None:
            for a in d:
                if a in init[k]:
                    src = np.asarray(init[k][a], dtype=np.float64)
                    if src.shape != d[a].shape:
                        raise InvalidArgument(f"initial {a} deltas of shape {src.shape}, expected {d[a].shape}")
                    d[a] = src.copy()
        deltas.append(d)
    states = [f.config.adam() for f in problem.fluids]
    trace = []
    for it in range(iterations + 1):
        last = it == iterations
        try:
            total, parts, grads, fields, images = problem.evaluate(deltas, keep_images=last)
        except _NonFinite as e:
            raise DivergenceError(it, e.value) from None
        if not np.isfinite(total):
            raise DivergenceError(it, total)
        trace.append({"iteration": it, "loss": total, **parts})
        if last:
            break
        for k in range(len(deltas)):
            deltas[k], states[k] = adam_step(states[k], deltas[k], grads[k])
            if not all(np.all(np.isfinite(v)) for v in deltas[k].values()):
                raise DivergenceError(it + 1, float("nan"))
    return [FrameResult(d, trace, fld, imgs) for d, fld, imgs in zip(deltas, fields, images)]


def stylize_frame(particles: ParticleSet, spec: GridSpec, config: StylizeConfig, base: ScalarGrid | None = None, init=None) -> FrameResult:
    """Optimize per-particle deltas of the selected attributes for one frame.

    ``base`` is a fixed density added to the particle density before
    rendering; ``init`` warm-starts the deltas. The input particles are never
    modified.
    """
    return stylize_fluids([Fluid(particles, config, base)], spec, None if init is None else [init])[0]


def apply_deltas(particles: ParticleSet, deltas: Mapping) -> ParticleSet:
    """Stylized particles: deltas added to ``rho0``, colours and positions.

    The density delta is also stored in the ``delta`` channel.
    """
    chans = {}
    pos = None
    if "density" in deltas:
        chans["rho0"] = particles["rho0"] + deltas["density"]
        chans["delta"] = np.asarray(deltas["density"], dtype=np.float64)
    if "color" in deltas:
        for c, name in enumerate(COLOR_CHANNELS):
            chans[name] = particles[name] + deltas["color"][:, c]
    if "position" in deltas:
        pos = particles.positions + deltas["position"]
    return particles.replace(positions=pos, **chans)
