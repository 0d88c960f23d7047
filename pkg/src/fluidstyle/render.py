"""Axis-aligned differentiable volume renderers.

Rays run parallel to one grid axis with one sample per cell. For a view
``"+z"`` the first sample along each ray is ``k = 0``; ``"-z"`` marches the
other way. Pixel rows follow the second transverse axis and columns the first,
so a ``+z`` view of an ``(nx, ny, nz)`` grid is an image of height ``ny`` and
width ``nx``.

Two-dimensional grids (``nz == 1``) accept only ``±z`` views; their rays hold
a single unit-length sample, which makes the smoke image the density plane
scaled by the emission coefficient.

Negative densities (and colours) are clamped to zero before rendering and
receive no gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .fields import GridSpec, Image, ScalarGrid

__all__ = [
    "AXES",
    "ViewConfig",
    "RenderConfig",
    "RenderCache",
    "render",
    "render_forward",
    "render_backward",
    "render_liquid",
    "render_smoke",
    "render_color",
]

AXES = {"+x": (0, 1), "-x": (0, -1), "+y": (1, 1), "-y": (1, -1), "+z": (2, 1), "-z": (2, -1)}


@dataclass(frozen=True)
class ViewConfig:
    axis: str = "+z"

    def __post_init__(self):
        if self.axis not in AXES:
            raise InvalidArgument(f"view axis must be one of {sorted(AXES)}, got {self.axis!r}")

    def check(self, spec: GridSpec):
        if spec.dim == 2 and AXES[self.axis][0] != 2:
            raise InvalidArgument(f"2D grids can only be viewed along ±z, not {self.axis}")

    def step(self, spec: GridSpec) -> float:
        return 1.0 if spec.dim == 2 else spec.spacing

    def to_rays(self, values):
        """Rearrange an ``(nx, ny, nz)`` array into ``(H, W, samples)`` rays."""
        axis, sign = AXES[self.axis]
        rays = np.moveaxis(values, axis, -1)
        if sign < 0:
            rays = rays[..., ::-1]
        return np.transpose(rays, (1, 0, 2))

    def from_rays(self, rays):
        axis, sign = AXES[self.axis]
        out = np.transpose(rays, (1, 0, 2))
        if sign < 0:
            out = out[..., ::-1]
        return np.moveaxis(out, -1, axis)


@dataclass(frozen=True)
class RenderConfig:
    mode: str = "smoke"
    gamma: float = 1.0
    emission: float = 1.0

    def __post_init__(self):
        if self.mode not in ("smoke", "liquid"):
            raise InvalidArgument(f"render mode must be 'smoke' or 'liquid', got {self.mode!r}")
        if not np.isfinite(self.gamma) or self.gamma <= 0:
            raise InvalidArgument(f"gamma must be finite and > 0, got {self.gamma!r}")
        if not np.isfinite(self.emission) or self.emission < 0:
            raise InvalidArgument(f"emission must be finite and >= 0, got {self.emission!r}")


@dataclass(frozen=True)
class RenderCache:
    mode: str
    spec: GridSpec
    view: ViewConfig
    config: RenderConfig
    step: float
    density: np.ndarray  # clamped rays (H, W, n)
    density_mask: np.ndarray
    transmittance: np.ndarray  # before each sample (smoke) or full ray (liquid)
    color: np.ndarray | None = None  # clamped rays (H, W, n, 3)
    color_mask: np.ndarray | None = None


def render_forward(density: ScalarGrid, view: ViewConfig, config: RenderConfig, color=None):
    """Render ``density`` (and optional rgb ``color`` grids); returns ``(Image, cache)``.

    ``config.mode`` selects the liquid image ``1 - exp(-gamma * sum(d dr))``
    or front-to-back emission-absorption for smoke. Passing three colour grids
    switches smoke rendering to per-channel emission ``emission * d * c``.
    """
    spec = density.spec
    view.check(spec)
    dr = view.step(spec)
    raw = view.to_rays(density.values)
    mask = raw >= 0.0
    d = np.where(mask, raw, 0.0)
    gamma = config.gamma

    if config.mode == "liquid":
        if color is not None:
            raise InvalidArgument("colour rendering requires smoke mode")
        tau = np.exp(-gamma * dr * d.sum(axis=-1))
        img = (1.0 - tau)[:, :, None]
        return Image(img), RenderCache("liquid", spec, view, config, dr, d, mask, tau)

    od = gamma * dr * d
    trans = np.exp(-(np.cumsum(od, axis=-1) - od))
    emit = config.emission * dr * d * trans
    if color is None:
        img = emit.sum(axis=-1)[:, :, None]
        return Image(img), RenderCache("smoke", spec, view, config, dr, d, mask, trans)

    if len(color) != 3:
        raise InvalidArgument(f"expected 3 colour grids, got {len(color)}")
    craw = np.stack([view.to_rays(c.values) for c in color], axis=-1)
    cmask = craw >= 0.0
    c = np.where(cmask, craw, 0.0)
    img = np.sum(emit[..., None] * c, axis=2)
    cache = RenderCache("color", spec, view, config, dr, d, mask, trans, c, cmask)
    return Image(img), cache


def render(density: ScalarGrid, view: ViewConfig, config: RenderConfig, color=None) -> Image:
    return render_forward(density, view, config, color)[0]


def render_liquid(density: ScalarGrid, view: ViewConfig = ViewConfig(), config: RenderConfig | None = None) -> Image:
    config = config or RenderConfig(mode="liquid")
    if config.mode != "liquid":
        config = RenderConfig("liquid", config.gamma, config.emission)
    return render_forward(density, view, config)[0]


def render_smoke(density: ScalarGrid, view: ViewConfig = ViewConfig(), config: RenderConfig | None = None) -> Image:
    config = config or RenderConfig()
    if config.mode != "smoke":
        config = RenderConfig("smoke", config.gamma, config.emission)
    return render_forward(density, view, config)[0]


def render_color(density: ScalarGrid, color, view: ViewConfig = ViewConfig(), config: RenderConfig | None = None) -> Image:
    config = config or RenderConfig()
    if config.mode != "smoke":
        config = RenderConfig("smoke", config.gamma, config.emission)
    return render_forward(density, view, config, color)[0]


def _rev_cumsum_exclusive(a):
    total = np.cumsum(a[..., ::-1], axis=-1)[..., ::-1]
    return total - a


def render_backward(cache: RenderCache, grad_image):
    """Adjoint of :func:`render_forward`.

    Returns the density gradient grid, or ``(density_grad, [r, g, b grads])``
    for colour renders.
    """
    g = np.asarray(getattr(grad_image, "pixels", grad_image), dtype=np.float64)
    if g.ndim == 2:
        g = g[:, :, None]
    h, w, n = cache.density.shape
    nch = 3 if cache.mode == "color" else 1
    if g.shape != (h, w, nch):
        raise InvalidArgument(f"image gradient of shape {g.shape}, expected {(h, w, nch)}")
    gamma, dr, sigma = cache.config.gamma, cache.step, cache.config.emission

    if cache.mode == "liquid":
        gd = (g[:, :, 0] * gamma * dr * cache.transmittance)[:, :, None] * np.ones(n)
    elif cache.mode == "smoke":
        emit = sigma * dr * cache.density * cache.transmittance
        gd = g[:, :, :1] * (sigma * dr * cache.transmittance - gamma * dr * _rev_cumsum_exclusive(emit))
    else:
        t, d, c = cache.transmittance, cache.density, cache.color
        emit = (sigma * dr * d * t)[..., None] * c
        per = sigma * dr * t[..., None] * c - gamma * dr * _rev_cumsum_exclusive(np.moveaxis(emit, -1, 0)).transpose(1, 2, 3, 0)
        gd = np.sum(g[:, :, None, :] * per, axis=-1)
        gc = g[:, :, None, :] * (sigma * dr * d * t)[..., None] * cache.color_mask

    gd = np.where(cache.density_mask, gd, 0.0)
    dgrid = ScalarGrid(cache.spec, cache.view.from_rays(gd))
    if cache.mode != "color":
        return dgrid
    cgrids = [ScalarGrid(cache.spec, cache.view.from_rays(gc[..., ch])) for ch in range(3)]
    return dgrid, cgrids
