"""Filter-bank features, Gram matrices, the style loss and the particle regularizers.

The filter bank is a small convolutional stack (conv, bias, ReLU, optional
2x2 average pool per layer) standing in for a pre-trained classifier. The
feature map of a layer is its ReLU output taken before pooling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import InvalidArgument
from .fields import Image, ScalarGrid
from .transfer import sph_density_backward, sph_density_forward

__all__ = [
    "ConvLayer",
    "FilterBank",
    "StyleTarget",
    "default_bank",
    "feature_forward",
    "gram",
    "style_loss",
    "style_loss_and_grad",
    "style_loss_backward",
    "reg_density",
    "reg_position",
    "DENSITY_REG_EPS",
]

DENSITY_REG_EPS = 1e-8


@dataclass(frozen=True)
class ConvLayer:
    weight: np.ndarray  # (c_out, c_in, k, k)
    bias: np.ndarray  # (c_out,)
    pool: bool = False

    def __post_init__(self):
        w = np.array(self.weight, dtype=np.float64)
        b = np.array(self.bias, dtype=np.float64).reshape(-1)
        if w.ndim != 4 or w.shape[2] != w.shape[3] or w.shape[2] % 2 == 0:
            raise InvalidArgument(f"conv weight must be (c_out, c_in, k, k) with odd k, got {w.shape}")
        if b.shape != (w.shape[0],):
            raise InvalidArgument(f"bias of shape {b.shape} for {w.shape[0]} output channels")
        w.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def c_in(self) -> int:
        return self.weight.shape[1]

    @property
    def c_out(self) -> int:
        return self.weight.shape[0]

    @property
    def k(self) -> int:
        return self.weight.shape[2]


@dataclass(frozen=True)
class FilterBank:
    """Ordered conv layers plus the style layer selection ``{layer index: weight}``."""

    layers: tuple
    style_layers: Mapping[int, float]

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise InvalidArgument("a filter bank needs at least one layer")
        for i in range(1, len(layers)):
            if layers[i].c_in != layers[i - 1].c_out:
                raise InvalidArgument(
                    f"layer {i} expects {layers[i].c_in} channels but layer {i - 1} produces {layers[i - 1].c_out}"
                )
        style = {int(k): float(v) for k, v in dict(self.style_layers).items()}
        if not style:
            raise InvalidArgument("at least one style layer must be selected")
        for k, v in style.items():
            if not 0 <= k < len(layers):
                raise InvalidArgument(f"style layer {k} out of range for {len(layers)} layers")
            if not np.isfinite(v) or v < 0:
                raise InvalidArgument(f"style layer weight must be >= 0, got {v}")
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "style_layers", dict(sorted(style.items())))

    @property
    def in_channels(self) -> int:
        return self.layers[0].c_in


def default_bank(seed: int = 0) -> FilterBank:
    """Three 3x3 layers (3 -> 16 -> 32 -> 64) with pooling after the first two.

    Weights are rows of a random orthogonal matrix, one per output channel, so
    the responses are decorrelated but otherwise arbitrary.
    """
    rng = np.random.default_rng(seed)
    layers = []
    for c_in, c_out, pool in ((3, 16, True), (16, 32, True), (32, 64, False)):
        fan_in = c_in * 9
        q, _ = np.linalg.qr(rng.standard_normal((fan_in, c_out)))
        w = np.sqrt(2.0) * q.T.reshape(c_out, c_in, 3, 3)
        layers.append(ConvLayer(w, np.zeros(c_out), pool))
    return FilterBank(tuple(layers), {0: 1.0, 1: 1.0, 2: 1.0})


def _conv(x, layer):
    k = layer.k
    p = k // 2
    _, h, w = x.shape
    xp = np.pad(x, ((0, 0), (p, p), (p, p)))
    out = np.broadcast_to(layer.bias[:, None, None], (layer.c_out, h, w)).copy()
    for dy in range(k):
        for dx in range(k):
            out += np.tensordot(layer.weight[:, :, dy, dx], xp[:, dy : dy + h, dx : dx + w], axes=(1, 0))
    return out


def _conv_backward(g, layer, shape):
    k = layer.k
    p = k // 2
    c, h, w = shape
    gp = np.zeros((c, h + 2 * p, w + 2 * p))
    for dy in range(k):
        for dx in range(k):
            gp[:, dy : dy + h, dx : dx + w] += np.tensordot(layer.weight[:, :, dy, dx], g, axes=(0, 0))
    return gp[:, p : p + h, p : p + w]


def _pool(x):
    c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    x = x[:, : 2 * h2, : 2 * w2]
    return 0.25 * (x[:, 0::2, 0::2] + x[:, 1::2, 0::2] + x[:, 0::2, 1::2] + x[:, 1::2, 1::2])


def _pool_backward(g, shape):
    out = np.zeros(shape)
    h2, w2 = g.shape[1:]
    q = 0.25 * g
    for oy in (0, 1):
        for ox in (0, 1):
            out[:, oy : 2 * h2 : 2, ox : 2 * w2 : 2] = q
    return out


def _as_input(image, bank):
    px = np.asarray(getattr(image, "pixels", image), dtype=np.float64)
    if px.ndim == 2:
        px = px[:, :, None]
    c = px.shape[2]
    replicate = False
    if c != bank.in_channels:
        if c == 1 and bank.in_channels == 3:
            replicate = True
            px = np.repeat(px, 3, axis=2)
        else:
            raise InvalidArgument(f"image has {c} channels, filter bank expects {bank.in_channels}")
    return np.transpose(px, (2, 0, 1)), replicate


@dataclass
class _Tape:
    inputs: list = field(default_factory=list)
    masks: list = field(default_factory=list)
    acts: list = field(default_factory=list)
    replicate: bool = False
    image_channels: int = 3


def _forward(image, bank, need_tape=False):
    x, replicate = _as_input(image, bank)
    tape = _Tape(replicate=replicate, image_channels=1 if replicate else x.shape[0])
    feats = {}
    last = max(bank.style_layers)
    for i, layer in enumerate(bank.layers[: last + 1]):
        z = _conv(x, layer)
        mask = z > 0
        a = np.where(mask, z, 0.0)
        if need_tape:
            tape.inputs.append(x)
            tape.masks.append(mask)
            tape.acts.append(a)
        if i in bank.style_layers:
            feats[i] = a
        x = _pool(a) if layer.pool else a
    return feats, tape


def feature_forward(image, bank: FilterBank) -> dict:
    """Feature maps ``(C, H, W)`` of every style layer, keyed by layer index."""
    return _forward(image, bank)[0]


def gram(features) -> np.ndarray:
    """Channel correlation matrix of a ``(C, H, W)`` or ``(C, P)`` feature map."""
    f = np.asarray(features, dtype=np.float64)
    f = f.reshape(f.shape[0], -1)
    return f @ f.T


@dataclass(frozen=True)
class StyleTarget:
    """Gram matrices of a style image for the style layers of a bank."""

    grams: Mapping[int, np.ndarray]
    source: str = ""

    @classmethod
    def from_image(cls, image, bank: FilterBank, source: str = "") -> "StyleTarget":
        feats = feature_forward(image, bank)
        return cls({i: gram(f) for i, f in feats.items()}, source)


def _weights(bank, layer_weights):
    if layer_weights is None:
        return dict(bank.style_layers)
    if isinstance(layer_weights, Mapping):
        w = {int(k): float(v) for k, v in layer_weights.items()}
    else:
        w = dict(zip(bank.style_layers, (float(v) for v in layer_weights)))
    if set(w) != set(bank.style_layers):
        raise InvalidArgument(f"layer weights for {sorted(w)} but style layers are {sorted(bank.style_layers)}")
    if any(v < 0 or not np.isfinite(v) for v in w.values()):
        raise InvalidArgument("layer weights must be finite and >= 0")
    return w


def _layer_terms(feats, target, weights):
    loss = 0.0
    dfeat = {}
    for i, f in feats.items():
        if i not in target.grams:
            raise InvalidArgument(f"style target has no Gram matrix for layer {i}")
        c = f.shape[0]
        p = f.shape[1] * f.shape[2]
        flat = f.reshape(c, p)
        diff = flat @ flat.T - target.grams[i]
        if diff.shape != (c, c):
            raise InvalidArgument(f"target Gram for layer {i} has shape {diff.shape}, expected {(c, c)}")
        norm = 1.0 / (4.0 * c * c * p * p)
        loss += weights[i] * norm * float(np.sum(diff * diff))
        # d/dF of sum((FF^T - G)^2) = 4 (FF^T - G) F
        dfeat[i] = (weights[i] * norm * 4.0 * (diff @ flat)).reshape(f.shape)
    return loss, dfeat


def style_loss(image, bank: FilterBank, target: StyleTarget, layer_weights=None) -> float:
    """Weighted, size-normalised squared Gram mismatch over the style layers."""
    feats = feature_forward(image, bank)
    return _layer_terms(feats, target, _weights(bank, layer_weights))[0]


def style_loss_and_grad(image, bank: FilterBank, target: StyleTarget, layer_weights=None):
    """Style loss and its gradient with respect to the image pixels ``(H, W, C)``."""
    feats, tape = _forward(image, bank, need_tape=True)
    loss, dfeat = _layer_terms(feats, target, _weights(bank, layer_weights))
    last = max(bank.style_layers)
    g_out = None  # gradient w.r.t. the output of layer i (after pooling)
    for i in range(last, -1, -1):
        layer = bank.layers[i]
        a = tape.acts[i]
        if g_out is None:
            g_act = np.zeros_like(a)
        else:
            g_act = _pool_backward(g_out, a.shape) if layer.pool else g_out
        if i in dfeat:
            g_act = g_act + dfeat[i]
        g_z = np.where(tape.masks[i], g_act, 0.0)
        g_out = _conv_backward(g_z, layer, tape.inputs[i].shape)
    grad = np.transpose(g_out, (1, 2, 0))
    if tape.replicate:
        grad = grad.sum(axis=2, keepdims=True)
    return loss, grad


def style_loss_backward(image, bank: FilterBank, target: StyleTarget, layer_weights=None) -> np.ndarray:
    return style_loss_and_grad(image, bank, target, layer_weights)[1]


def reg_density(deltas, eps: float = DENSITY_REG_EPS):
    """Net-change penalty ``(sum d)^2 - sum log(|d| + eps)`` and its gradient."""
    d = np.asarray(deltas, dtype=np.float64)
    s = float(d.sum())
    a = np.abs(d) + eps
    value = s * s - float(np.sum(np.log(a)))
    grad = 2.0 * s - np.sign(d) / a
    return value, grad


def reg_position(positions, h, rho0: ScalarGrid, masses=None):
    """Squared distance of the SPH density from ``rho0``; returns ``(value, grad_positions)``."""
    pos = np.asarray(positions, dtype=np.float64)
    if masses is None:
        masses = np.ones(len(pos))
    rho, cache = sph_density_forward(pos, masses, h, rho0.spec)
    r = rho.values - rho0.values
    value = float(np.sum(r * r))
    grad = sph_density_backward(cache, 2.0 * r)
    return value, grad
