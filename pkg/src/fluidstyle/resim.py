"""Sparse particle re-simulation of grid-based smoke.

One particle is sampled per occupied voxel, transported through the simulation
velocities, spread out again by descending the position regularizer, and
finally given a residual pyramid of densities that reconstructs the grid
through progressively narrower splats.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .fields import GridSpec, ParticleSet, ScalarGrid, VectorGrid
from .style import reg_position
from .transfer import g2p, p2g, sph_density

__all__ = [
    "MultiScaleParams",
    "MultiScale",
    "Redistribution",
    "sample_particles",
    "advect_particles",
    "rest_density_grid",
    "redistribute_positions",
    "multiscale_density",
    "reconstruct_density",
    "level_radii",
]


def sample_particles(grid: ScalarGrid, threshold: float = 0.0) -> ParticleSet:
    """One unit-mass particle at the centre of every cell denser than ``threshold``.

    Particles are ordered by the flat (x-fastest) cell index.
    """
    idx = np.nonzero(grid.flat > threshold)[0]
    pos = grid.spec.node_positions()[idx]
    return ParticleSet(pos, {"mass": np.ones(len(idx))})


def _clamp(spec: GridSpec, pos):
    return np.clip(pos, spec.lower(), spec.upper())


def advect_particles(particles, velocity: VectorGrid, dt: float) -> np.ndarray:
    """RK2 midpoint transport; returns new positions clamped to the grid domain."""
    pos = np.asarray(getattr(particles, "positions", particles), dtype=np.float64)
    spec = velocity.spec
    comps = [velocity.component(c) for c in range(spec.dim)]

    def vel(x):
        return np.stack([g2p(c, x) for c in comps], axis=1) if len(x) else np.zeros_like(x)

    mid = pos + 0.5 * dt * vel(pos)
    return _clamp(spec, pos + dt * vel(mid))


def rest_density_grid(positions, h, spec: GridSpec, masses=None, rest=None) -> ScalarGrid:
    """Target density: ``rest`` on cells holding a particle, zero elsewhere.

    ``rest`` defaults to the mean SPH density over those occupied cells.
    """
    pos = np.asarray(positions, dtype=np.float64)
    if masses is None:
        masses = np.ones(len(pos))
    occupied = np.zeros(spec.size, dtype=bool)
    if len(pos):
        cells = np.clip(spec.cell_of(pos), 0, np.asarray(spec.dims[: spec.dim]) - 1)
        cells = np.pad(cells, ((0, 0), (0, 3 - spec.dim)))
        occupied[spec.flat_index(cells[:, 0], cells[:, 1], cells[:, 2])] = True
    if rest is None:
        rho = sph_density(pos, masses, h, spec).flat
        rest = float(rho[occupied].mean()) if occupied.any() else 0.0
    return ScalarGrid.from_flat(spec, np.where(occupied, rest, 0.0))


@dataclass(frozen=True)
class Redistribution:
    positions: np.ndarray
    objective: list  # value after each accepted step, starting with the initial one
    step_size: float


def redistribute_positions(particles, rho0: ScalarGrid, h, steps=20, step_size=0.1, max_halvings=10) -> Redistribution:
    """Gradient descent on the position regularizer with step rejection.

    A step that raises the objective is discarded and the step size halved,
    at most ``max_halvings`` times per step; if none succeeds the descent stops.
    """
    pos = np.array(getattr(particles, "positions", particles), dtype=np.float64)
    masses = particles.masses() if isinstance(particles, ParticleSet) else None
    spec = rho0.spec
    value, grad = reg_position(pos, h, rho0, masses)
    trace = [value]
    for _ in range(int(steps)):
        for _halving in range(max_halvings + 1):
            trial = _clamp(spec, pos - step_size * grad)
            tv, tg = reg_position(trial, h, rho0, masses)
            if tv <= value:
                break
            step_size *= 0.5
        else:
            break
        pos, value, grad = trial, tv, tg
        trace.append(value)
    return Redistribution(pos, trace, step_size)


@dataclass(frozen=True)
class MultiScaleParams:
    r: float = 2.0
    n_s: int = 3

    def __post_init__(self):
        if int(self.n_s) != self.n_s or self.n_s < 0:
            raise InvalidArgument(f"n_s must be a non-negative integer, got {self.n_s!r}")
        if not np.isfinite(self.r) or self.r <= 0:
            raise InvalidArgument(f"r must be finite and > 0, got {self.r!r}")


def level_radii(r, n_levels):
    return tuple(r / 2.0**i for i in range(n_levels))


@dataclass(frozen=True)
class MultiScale:
    particles: ParticleSet  # input particles plus rho0 .. rho{n_s}
    radii: tuple
    reconstruction: ScalarGrid


def multiscale_density(particles: ParticleSet, grid: ScalarGrid, params: MultiScaleParams) -> MultiScale:
    """Residual density pyramid on the particles.

    Level 0 interpolates the grid; each further level interpolates what the
    accumulated reconstruction still misses and is splatted at half the
    previous support.
    """
    if params.n_s < 0:
        raise InvalidArgument("n_s must be >= 0")
    spec = grid.spec
    if params.r < spec.spacing:
        raise InvalidArgument(f"coarsest support {params.r} is below the grid spacing {spec.spacing}")
    radii = level_radii(params.r, params.n_s + 1)
    if 2.0 * radii[-1] < 0.5 * spec.spacing:
        warnings.warn(
            f"finest splat support {2 * radii[-1]:g} is below half the grid spacing", RuntimeWarning, stacklevel=2
        )
    x = particles.positions
    levels = {"rho0": g2p(grid, x)}
    recon = p2g(x, levels["rho0"], radii[0], spec).values
    for i in range(1, params.n_s + 1):
        residual = ScalarGrid(spec, grid.values - recon)
        levels[f"rho{i}"] = g2p(residual, x)
        recon = recon + p2g(x, levels[f"rho{i}"], radii[i], spec).values
    return MultiScale(particles.replace(**levels), radii, ScalarGrid(spec, recon))


def reconstruct_density(particles: ParticleSet, radii, spec: GridSpec) -> ScalarGrid:
    """Sum of the per-level splats ``p2g(x, rho_i, r_i)``."""
    names = particles.density_levels()
    if len(radii) < len(names):
        raise InvalidArgument(f"{len(names)} density levels but only {len(radii)} radii")
    if not names:
        return spec.zeros()
    x = particles.positions
    recon = p2g(x, particles[names[0]], radii[0], spec).values
    for i in range(1, len(names)):
        recon = recon + p2g(x, particles[names[i]], radii[i], spec).values
    return ScalarGrid(spec, recon)
