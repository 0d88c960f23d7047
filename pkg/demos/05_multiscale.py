"""Resample the plume to particles and reconstruct it with more and more levels."""

import numpy as np

from fluidstyle import ParticleSet
from fluidstyle.fields import psnr
from fluidstyle.fixtures import plume_fixture
from fluidstyle.resim import MultiScaleParams, multiscale_density, redistribute_positions, rest_density_grid, sample_particles

grid = plume_fixture()
spec = grid.spec
p = sample_particles(grid, 0.0)
rho0 = rest_density_grid(p.positions, spec.spacing, spec)
res = redistribute_positions(p, rho0, spec.spacing, steps=20, step_size=0.1)
print(f"{p.count} particles, redistribution objective {res.objective[0]:.3f} -> {res.objective[-1]:.3f}")
p = ParticleSet(res.positions, {"mass": p.masses()})

for n_s in range(4):
    rec = multiscale_density(p, grid, MultiScaleParams(2.0 * spec.spacing, n_s)).reconstruction
    print(f"n_s={n_s}: l2={np.linalg.norm(rec.values - grid.values):.4f} PSNR={psnr(grid, rec):.2f} dB")
