"""Splat particles onto a grid and read the grid back at the particles."""

import numpy as np

from fluidstyle import GridSpec, g2p, p2g, sph_density
from fluidstyle.fields import kernel_cubic

# kernel values at the knots, support is 2h
print("W(0), W(h), W(2h) =", [kernel_cubic(r, 1.0) for r in (0.0, 1.0, 2.0)])

rng = np.random.default_rng(0)
spec = GridSpec((16, 16, 1), spacing=0.5)
pos = rng.uniform(2, 5.5, (200, 2))
vals = np.sin(pos[:, 0]) * np.cos(pos[:, 1])

grid = p2g(pos, vals, 0.5, spec)  # normalized average of particle values
rho = sph_density(pos, np.ones(len(pos)), 0.5, spec)  # unnormalized mass density
back = g2p(grid, pos)  # Catmull-Rom interpolation

print("grid range", grid.values.min(), grid.values.max())
print("total SPH mass on grid", rho.values.sum() * spec.spacing**2)
print("round trip rms error", np.sqrt(np.mean((back - vals) ** 2)))
