"""Lagrangian neural style transfer for fluids.

Per-particle attributes (density levels, color, position) are optimized so
that differentiable renderings of the particle-reconstructed field match the
Gram statistics of a style image.
"""

from .errors import ConfigError, DivergenceError, FormatError, InvalidArgument, LengthError, UnsupportedVersion
from .fields import GridSpec, Image, ParticleSet, ScalarGrid, VectorGrid, gaussian_weights, kernel_cubic, kernel_cubic_deriv, psnr
from .optim import AdamState, adam_step
from .render import RenderConfig, ViewConfig, render, render_backward, render_color, render_forward, render_liquid, render_smoke
from .resim import (
    MultiScaleParams,
    advect_particles,
    multiscale_density,
    reconstruct_density,
    redistribute_positions,
    rest_density_grid,
    sample_particles,
)
from .style import FilterBank, StyleTarget, default_bank, feature_forward, gram, reg_density, reg_position, style_loss
from .stylize import Fluid, StylizeConfig, apply_deltas, stylize_fluids, stylize_frame
from .temporal import TemporalConfig, smooth_temporal, stylize_sequence
from .transfer import g2p, p2g, sph_density

__version__ = "0.1.0"
