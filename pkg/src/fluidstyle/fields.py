"""Grid and particle containers, the cubic B-spline kernel and small numeric helpers.

Grids are node-centred: node ``(i, j, k)`` sits at ``origin + spacing * (i, j, k)``
and doubles as the centre of cell ``(i, j, k)``. Values are held as arrays of
shape ``(nx, ny, nz)`` so that ``values[i, j, k]`` addresses a node directly;
the flat layout used on disk and in ``flat`` is x-fastest
(``index = i + nx * (j + ny * k)``), i.e. Fortran order.

A grid with ``nz == 1`` is two-dimensional and pairs with ``D = 2`` particle
positions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import InvalidArgument

__all__ = [
    "GridSpec",
    "ScalarGrid",
    "VectorGrid",
    "ParticleSet",
    "Image",
    "kernel_cubic",
    "kernel_cubic_deriv",
    "gaussian_weights",
    "psnr",
]


def _frozen(a):
    a = np.array(a, dtype=np.float64, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class GridSpec:
    """Geometry of a regular grid without its values."""

    dims: tuple[int, int, int]
    spacing: float = 1.0
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        if len(dims) == 2:
            dims = dims + (1,)
        if len(dims) != 3 or min(dims) < 1:
            raise InvalidArgument(f"grid dims must be three positive integers, got {self.dims!r}")
        spacing = float(self.spacing)
        if not np.isfinite(spacing) or spacing <= 0:
            raise InvalidArgument(f"grid spacing must be finite and > 0, got {self.spacing!r}")
        origin = tuple(float(o) for o in self.origin)
        if len(origin) == 2:
            origin = origin + (0.0,)
        if len(origin) != 3 or not all(np.isfinite(origin)):
            raise InvalidArgument(f"grid origin must be three finite floats, got {self.origin!r}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def dim(self) -> int:
        return 2 if self.dims[2] == 1 else 3

    @property
    def size(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    def flat_index(self, i, j, k=0):
        nx, ny, _ = self.dims
        return np.asarray(i) + nx * (np.asarray(j) + ny * np.asarray(k))

    def unravel(self, index):
        nx, ny, _ = self.dims
        index = np.asarray(index)
        return index % nx, (index // nx) % ny, index // (nx * ny)

    def node_positions(self) -> np.ndarray:
        """World coordinates of all nodes in flat order, shape ``(size, dim)``."""
        i, j, k = self.unravel(np.arange(self.size))
        ijk = np.stack([i, j, k], axis=1)[:, : self.dim].astype(np.float64)
        return np.asarray(self.origin[: self.dim]) + self.spacing * ijk

    def lower(self) -> np.ndarray:
        return np.asarray(self.origin[: self.dim])

    def upper(self) -> np.ndarray:
        ext = np.asarray(self.dims[: self.dim], dtype=np.float64) - 1.0
        return self.lower() + self.spacing * ext

    def cell_of(self, positions) -> np.ndarray:
        """Integer cell coordinates ``(N, dim)`` of the cells containing ``positions``."""
        u = (np.asarray(positions, dtype=np.float64) - self.lower()) / self.spacing
        return np.floor(u + 0.5).astype(np.int64)

    def zeros(self) -> "ScalarGrid":
        return ScalarGrid(self, np.zeros(self.dims))


@dataclass(frozen=True)
class ScalarGrid:
    """Dense scalar field on a regular grid; ``values`` has shape ``dims``."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1 and values.size == self.spec.size:
            values = values.reshape(self.spec.dims, order="F")
        elif values.ndim == 2 and self.spec.dims[2] == 1:
            values = values[:, :, None]
        if values.shape != self.spec.dims:
            raise InvalidArgument(f"grid values of shape {values.shape} do not match dims {self.spec.dims}")
        if not np.all(np.isfinite(values)):
            raise InvalidArgument("grid values must be finite")
        object.__setattr__(self, "values", _frozen(values))

    @classmethod
    def from_flat(cls, spec: GridSpec, flat) -> "ScalarGrid":
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (spec.size,):
            raise InvalidArgument(f"expected {spec.size} flat values, got shape {flat.shape}")
        return cls(spec, flat.reshape(spec.dims, order="F"))

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel(order="F")

    @property
    def dims(self):
        return self.spec.dims

    @property
    def spacing(self):
        return self.spec.spacing

    @property
    def origin(self):
        return self.spec.origin

    @property
    def dim(self):
        return self.spec.dim


@dataclass(frozen=True)
class VectorGrid:
    """Vector field with one component per spatial dimension; ``values`` is ``dims + (dim,)``."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        want = self.spec.dims + (self.spec.dim,)
        if values.shape != want:
            raise InvalidArgument(f"vector grid values of shape {values.shape}, expected {want}")
        if not np.all(np.isfinite(values)):
            raise InvalidArgument("vector grid values must be finite")
        object.__setattr__(self, "values", _frozen(values))

    def component(self, c: int) -> ScalarGrid:
        return ScalarGrid(self.spec, self.values[..., c])

    @classmethod
    def from_function(cls, spec: GridSpec, fn) -> "VectorGrid":
        """Sample ``fn(points) -> (M, dim)`` at every node."""
        v = np.asarray(fn(spec.node_positions()), dtype=np.float64)
        return cls(spec, v.reshape(spec.dims + (spec.dim,), order="F"))


@dataclass(frozen=True)
class ParticleSet:
    """Particle positions ``(N, D)`` and named per-particle scalar channels.

    Reserved channel names: ``rho0`` .. ``rho{n}`` for multi-scale densities,
    ``mass``, ``color_r``/``color_g``/``color_b`` and ``delta``.
    """

    positions: np.ndarray
    channels: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim == 1 and pos.size == 0:
            pos = pos.reshape(0, 3)
        if pos.ndim != 2 or pos.shape[1] not in (2, 3):
            raise InvalidArgument(f"positions must be (N, 2) or (N, 3), got {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise InvalidArgument("particle positions must be finite")
        chans = {}
        for name, arr in self.channels.items():
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != (pos.shape[0],):
                raise InvalidArgument(
                    f"channel {name!r} has shape {arr.shape}, expected ({pos.shape[0]},)"
                )
            chans[name] = _frozen(arr)
        if "mass" in chans and np.any(chans["mass"] <= 0):
            raise InvalidArgument("mass channel must be strictly positive")
        object.__setattr__(self, "positions", _frozen(pos))
        object.__setattr__(self, "channels", chans)

    @property
    def count(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def __len__(self):
        return self.count

    def __getitem__(self, name: str) -> np.ndarray:
        return self.channels[name]

    def replace(self, positions=None, **channels) -> "ParticleSet":
        """A copy with new positions and/or added or overwritten channels."""
        merged = dict(self.channels)
        merged.update(channels)
        return ParticleSet(self.positions if positions is None else positions, merged)

    def density_levels(self) -> list[str]:
        """Names ``rho0, rho1, ...`` present in order, stopping at the first gap."""
        names = []
        while f"rho{len(names)}" in self.channels:
            names.append(f"rho{len(names)}")
        return names

    def masses(self) -> np.ndarray:
        if "mass" in self.channels:
            return self.channels["mass"]
        return np.ones(self.count)


@dataclass(frozen=True)
class Image:
    """Raster image with ``pixels`` of shape ``(height, width, channels)``."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3) or min(px.shape[:2]) < 1:
            raise InvalidArgument(f"image pixels must be (H, W, 1|3), got {px.shape}")
        if not np.all(np.isfinite(px)) or np.any(px < 0):
            raise InvalidArgument("image pixels must be finite and non-negative")
        object.__setattr__(self, "pixels", _frozen(px))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]


def _check_h(h):
    h = float(h)
    if not np.isfinite(h) or h <= 0:
        raise InvalidArgument(f"kernel support scale h must be finite and > 0, got {h!r}")
    return h


def kernel_cubic(r, h=1.0):
    """Cubic B-spline weight at distance ``r`` for support scale ``h``.

    The piecewise polynomial is evaluated at ``q = r / h`` and vanishes for
    ``q >= 2``. No dimension-dependent normalisation constant is applied.
    """
    h = _check_h(h)
    q = np.asarray(r, dtype=np.float64) / h
    inner = 2.0 / 3.0 - q * q + 0.5 * q**3
    outer = (2.0 - q) ** 3 / 6.0
    # the outer branch at q = 1 gives exactly 1/6
    w = np.where(q < 1.0, inner, np.where(q <= 2.0, outer, 0.0))
    return w if w.ndim else float(w)


def kernel_cubic_deriv(r, h=1.0):
    """Derivative of :func:`kernel_cubic` with respect to ``r``."""
    h = _check_h(h)
    q = np.asarray(r, dtype=np.float64) / h
    inner = -2.0 * q + 1.5 * q * q
    outer = -0.5 * (2.0 - q) ** 2
    d = np.where(q < 1.0, inner, np.where(q <= 2.0, outer, 0.0)) / h
    return d if d.ndim else float(d)


def gaussian_weights(sigma, radius):
    """Normalised, symmetric Gaussian taps for offsets ``-radius .. radius``."""
    sigma = float(sigma)
    if not np.isfinite(sigma) or sigma <= 0:
        raise InvalidArgument(f"sigma must be > 0, got {sigma!r}")
    radius = int(radius)
    if radius < 0:
        raise InvalidArgument(f"radius must be >= 0, got {radius}")
    t = np.arange(1, radius + 1, dtype=np.float64)
    half = np.exp(-(t * t) / (2.0 * sigma * sigma))
    w = np.concatenate([half[::-1], [1.0], half])
    return w / w.sum()


def psnr(reference, test, peak=None) -> float:
    """Peak signal-to-noise ratio in dB; ``peak`` defaults to ``max(reference)``."""
    ref = np.asarray(getattr(reference, "values", reference), dtype=np.float64)
    out = np.asarray(getattr(test, "values", test), dtype=np.float64)
    mse = np.mean((ref - out) ** 2)
    peak = float(np.max(ref)) if peak is None else float(peak)
    if mse == 0:
        return float("inf")
    return float(10.0 * np.log10(peak * peak / mse))
