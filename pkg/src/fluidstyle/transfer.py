"""Differentiable particle/grid transfers.

``p2g`` is the normalised kernel splat, ``sph_density`` the unnormalised
mass-weighted kernel sum and ``g2p`` a separable Catmull-Rom interpolant.
Every transfer has a ``*_forward`` variant returning a cache that the matching
``*_backward`` consumes to produce exact adjoints.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .fields import GridSpec, ScalarGrid, kernel_cubic, kernel_cubic_deriv

__all__ = [
    "WEIGHT_EPS",
    "NeighborBins",
    "KernelPairs",
    "kernel_pairs",
    "p2g",
    "p2g_forward",
    "p2g_backward",
    "sph_density",
    "sph_density_forward",
    "sph_density_backward",
    "g2p",
    "g2p_forward",
    "g2p_backward",
]

#: nodes whose summed kernel weight falls below this are treated as empty
WEIGHT_EPS = 1e-12


def _positions(positions, dim=None):
    pos = np.asarray(positions, dtype=np.float64)
    if pos.ndim == 1 and pos.size == 0:
        pos = pos.reshape(0, dim or 3)
    if pos.ndim != 2:
        raise InvalidArgument(f"positions must be a (N, D) array, got shape {pos.shape}")
    if dim is not None and pos.shape[1] != dim:
        raise InvalidArgument(f"positions have dimension {pos.shape[1]}, grid has {dim}")
    if not np.all(np.isfinite(pos)):
        raise InvalidArgument("positions must be finite")
    return pos


def _grad_flat(grad, spec):
    g = np.asarray(getattr(grad, "values", grad), dtype=np.float64)
    if g.shape == spec.dims:
        return g.ravel(order="F")
    if g.shape == (spec.size,):
        return g
    raise InvalidArgument(f"gradient of shape {g.shape} does not match grid dims {spec.dims}")


class NeighborBins:
    """Uniform binning of particles with bin edge ``2h``.

    Querying the ``3**D`` bins around a point returns every particle within
    ``2h`` of it (plus some farther ones).
    """

    def __init__(self, positions, h):
        if not np.isfinite(h) or h <= 0:
            raise InvalidArgument(f"h must be finite and > 0, got {h!r}")
        self.positions = _positions(positions)
        self.h = float(h)
        self.bin_size = 2.0 * self.h
        self.dim = self.positions.shape[1]
        coords = np.floor(self.positions / self.bin_size).astype(np.int64)
        self._lo = coords.min(axis=0) - 1 if len(coords) else np.zeros(self.dim, np.int64)
        hi = coords.max(axis=0) + 1 if len(coords) else np.zeros(self.dim, np.int64)
        self._extent = hi - self._lo + 1
        keys = self._key(coords)
        self._order = np.argsort(keys, kind="stable")
        self._sorted = keys[self._order]
        self._coords = coords

    def _key(self, coords):
        rel = coords - self._lo
        key = np.zeros(len(coords), dtype=np.int64)
        for d in range(self.dim - 1, -1, -1):
            key = key * self._extent[d] + rel[:, d]
        return key

    @property
    def bins(self) -> dict:
        """Mapping from bin coordinates to the particle indices they hold."""
        out = {}
        for idx in self._order:
            out.setdefault(tuple(int(c) for c in self._coords[idx]), []).append(int(idx))
        return {k: np.asarray(v) for k, v in out.items()}

    def query(self, point) -> np.ndarray:
        """Candidate particle indices near a single point."""
        _, part = self.candidates(np.asarray(point, dtype=np.float64)[None, :])
        return np.sort(part)

    def candidates(self, points):
        """All ``(point, particle)`` candidate index pairs for an array of points."""
        points = _positions(points, self.dim)
        if len(self._sorted) == 0 or len(points) == 0:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty
        centre = np.floor(points / self.bin_size).astype(np.int64)
        point_ids, part_ids = [], []
        for off in itertools.product((-1, 0, 1), repeat=self.dim):
            c = centre + np.asarray(off)
            inside = np.all((c >= self._lo) & (c < self._lo + self._extent), axis=1)
            pid = np.nonzero(inside)[0]
            key = self._key(c[pid])
            start = np.searchsorted(self._sorted, key, side="left")
            stop = np.searchsorted(self._sorted, key, side="right")
            counts = stop - start
            total = int(counts.sum())
            if total == 0:
                continue
            rep = np.repeat(np.arange(len(pid)), counts)
            within = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
            point_ids.append(pid[rep])
            part_ids.append(self._order[start[rep] + within])
        if not point_ids:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty
        return np.concatenate(point_ids), np.concatenate(part_ids)


@dataclass(frozen=True)
class KernelPairs:
    """Node/particle pairs within kernel support and their kernel terms."""

    spec: GridSpec
    h: float
    n_particles: int
    node: np.ndarray
    part: np.ndarray
    direction: np.ndarray  # unit vector from node to particle, zero at r = 0
    w: np.ndarray
    dw: np.ndarray


def kernel_pairs(positions, h, spec: GridSpec) -> KernelPairs:
    pos = _positions(positions, spec.dim)
    if not np.isfinite(h) or h <= 0:
        raise InvalidArgument(f"h must be finite and > 0, got {h!r}")
    nodes = spec.node_positions()
    node, part = NeighborBins(pos, h).candidates(nodes)
    diff = pos[part] - nodes[node]
    dist = np.sqrt(np.sum(diff * diff, axis=1))
    keep = dist < 2.0 * h
    # deterministic accumulation order: by node, then particle
    order = np.lexsort((part[keep], node[keep]))
    node, part, diff, dist = node[keep][order], part[keep][order], diff[keep][order], dist[keep][order]
    safe = np.where(dist > 0, dist, 1.0)
    direction = np.where(dist[:, None] > 0, diff / safe[:, None], 0.0)
    return KernelPairs(
        spec=spec,
        h=float(h),
        n_particles=len(pos),
        node=node,
        part=part,
        direction=direction,
        w=kernel_cubic(dist, h),
        dw=kernel_cubic_deriv(dist, h),
    )


@dataclass(frozen=True)
class P2GCache:
    pairs: KernelPairs
    values: np.ndarray
    denom: np.ndarray
    out: np.ndarray
    active: np.ndarray


def p2g_forward(positions, values, h, spec: GridSpec, pairs: KernelPairs | None = None):
    """Normalised splat of per-particle ``values``; returns ``(grid, cache)``.

    ``pairs`` may be passed to reuse a neighbourhood computed for the same
    positions, ``h`` and grid.
    """
    values = np.asarray(values, dtype=np.float64)
    pos = _positions(positions, spec.dim)
    if values.shape != (len(pos),):
        raise InvalidArgument(f"got {values.shape} values for {len(pos)} particles")
    if pairs is None:
        pairs = kernel_pairs(pos, h, spec)
    m = spec.size
    denom = np.bincount(pairs.node, weights=pairs.w, minlength=m)
    numer = np.bincount(pairs.node, weights=pairs.w * values[pairs.part], minlength=m)
    active = denom >= WEIGHT_EPS
    out = np.zeros(m)
    out[active] = numer[active] / denom[active]
    grid = ScalarGrid.from_flat(spec, out)
    return grid, P2GCache(pairs, values, denom, out, active)


def p2g(positions, values, h, spec: GridSpec) -> ScalarGrid:
    """Normalised kernel splat of particle values onto the nodes of ``spec``."""
    return p2g_forward(positions, values, h, spec)[0]


def _scatter_vec(part, vec, n, dim):
    out = np.zeros((n, dim))
    for d in range(dim):
        out[:, d] = np.bincount(part, weights=vec[:, d], minlength=n)
    return out


def p2g_backward(cache: P2GCache, grad_grid):
    """Adjoint of :func:`p2g_forward`: ``(grad_values, grad_positions)``."""
    pairs = cache.pairs
    g = _grad_flat(grad_grid, pairs.spec)
    scaled = np.zeros_like(g)
    scaled[cache.active] = g[cache.active] / cache.denom[cache.active]
    sn = scaled[pairs.node]
    n = pairs.n_particles
    grad_values = np.bincount(pairs.part, weights=sn * pairs.w, minlength=n)
    coef = sn * (cache.values[pairs.part] - cache.out[pairs.node]) * pairs.dw
    grad_pos = _scatter_vec(pairs.part, coef[:, None] * pairs.direction, n, pairs.spec.dim)
    return grad_values, grad_pos


@dataclass(frozen=True)
class SPHCache:
    pairs: KernelPairs
    masses: np.ndarray


def sph_density_forward(positions, masses, h, spec: GridSpec, pairs: KernelPairs | None = None):
    """SPH density ``sum_j m_j W(|x - x_j|, h)`` at every node; returns ``(grid, cache)``."""
    pos = _positions(positions, spec.dim)
    masses = np.asarray(masses, dtype=np.float64)
    if masses.shape != (len(pos),):
        raise InvalidArgument(f"got {masses.shape} masses for {len(pos)} particles")
    if np.any(masses <= 0):
        raise InvalidArgument("masses must be strictly positive")
    if pairs is None:
        pairs = kernel_pairs(pos, h, spec)
    rho = np.bincount(pairs.node, weights=pairs.w * masses[pairs.part], minlength=spec.size)
    return ScalarGrid.from_flat(spec, rho), SPHCache(pairs, masses)


def sph_density(positions, masses, h, spec: GridSpec) -> ScalarGrid:
    return sph_density_forward(positions, masses, h, spec)[0]


def sph_density_backward(cache: SPHCache, grad_grid) -> np.ndarray:
    """Gradient of a loss on the SPH density with respect to particle positions."""
    pairs = cache.pairs
    g = _grad_flat(grad_grid, pairs.spec)
    coef = g[pairs.node] * cache.masses[pairs.part] * pairs.dw
    return _scatter_vec(pairs.part, coef[:, None] * pairs.direction, pairs.n_particles, pairs.spec.dim)


def _catmull_rom(t):
    t2, t3 = t * t, t * t * t
    return np.stack(
        [
            0.5 * (-t3 + 2.0 * t2 - t),
            0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
            0.5 * (-3.0 * t3 + 4.0 * t2 + t),
            0.5 * (t3 - t2),
        ],
        axis=-1,
    )


@dataclass(frozen=True)
class G2PCache:
    spec: GridSpec
    index: np.ndarray  # (N, 4**D) flat node indices
    weight: np.ndarray  # (N, 4**D)


def g2p_forward(grid: ScalarGrid, positions):
    """Catmull-Rom interpolation of ``grid`` at ``positions``; returns ``(values, cache)``.

    Positions outside the domain are clamped to it and stencil indices are
    clamped to the boundary nodes.
    """
    spec = grid.spec
    pos = _positions(positions, spec.dim)
    n = len(pos)
    index = np.zeros((n, 1), dtype=np.int64)
    weight = np.ones((n, 1))
    strides = (1, spec.dims[0], spec.dims[0] * spec.dims[1])
    for d in range(spec.dim):
        size = spec.dims[d]
        u = np.clip((pos[:, d] - spec.origin[d]) / spec.spacing, 0.0, size - 1.0)
        base = np.floor(u)
        t = u - base
        idx = np.clip(base.astype(np.int64)[:, None] + np.arange(-1, 3), 0, size - 1)
        wd = _catmull_rom(t)
        index = (index[:, :, None] + strides[d] * idx[:, None, :]).reshape(n, -1)
        weight = (weight[:, :, None] * wd[:, None, :]).reshape(n, -1)
    values = np.sum(weight * grid.flat[index], axis=1)
    return values, G2PCache(spec, index, weight)


def g2p(grid: ScalarGrid, positions) -> np.ndarray:
    return g2p_forward(grid, positions)[0]


def g2p_backward(cache: G2PCache, grad_values) -> ScalarGrid:
    """Scatter per-particle gradients back onto the grid nodes."""
    g = np.asarray(grad_values, dtype=np.float64)
    if g.shape != (cache.index.shape[0],):
        raise InvalidArgument(f"expected {cache.index.shape[0]} particle gradients, got {g.shape}")
    flat = np.bincount(
        cache.index.ravel(), weights=(cache.weight * g[:, None]).ravel(), minlength=cache.spec.size
    )
    return ScalarGrid.from_flat(cache.spec, flat)
