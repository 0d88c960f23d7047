"""Sequence stylization: keyframes, warm starts and temporal smoothing of deltas."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument
from .fields import GridSpec, gaussian_weights
from .stylize import StylizeConfig, stylize_frame

__all__ = ["TemporalConfig", "SequenceResult", "smooth_temporal", "interpolate_keyframes", "keyframe_indices", "stylize_sequence"]


@dataclass(frozen=True)
class TemporalConfig:
    """Gaussian width/taps in frames and the keyframe stride.

    ``radius = 0`` disables smoothing.
    """

    sigma: float = 1.5
    radius: int = 3
    stride: int = 1
    warm_start: bool = True

    def __post_init__(self):
        if not np.isfinite(self.sigma) or self.sigma <= 0:
            raise InvalidArgument(f"sigma must be > 0, got {self.sigma}")
        if int(self.radius) != self.radius or self.radius < 0:
            raise InvalidArgument(f"radius must be a non-negative integer, got {self.radius}")
        if int(self.stride) != self.stride or self.stride < 1:
            raise InvalidArgument(f"stride must be an integer >= 1, got {self.stride}")

    @property
    def recommended_radius(self) -> int:
        return math.ceil(2 * self.sigma)


def _stack(frames):
    if isinstance(frames[0], dict):
        keys = frames[0].keys()
        return {k: np.stack([np.asarray(f[k], dtype=np.float64) for f in frames]) for k in keys}
    return np.stack([np.asarray(f, dtype=np.float64) for f in frames])


def _smooth_array(a, w, radius):
    t_count = a.shape[0]
    out = np.empty_like(a)
    for t in range(t_count):
        lo, hi = max(0, t - radius), min(t_count - 1, t + radius)
        taps = w[lo - t + radius : hi - t + radius + 1]
        out[t] = np.tensordot(taps, a[lo : hi + 1], axes=(0, 0)) / taps.sum()
    return out


def smooth_temporal(frames, config: TemporalConfig):
    """Convolve every particle's per-frame deltas with Gaussian taps.

    ``frames`` is a list (one entry per frame) of arrays, or of dicts of
    arrays, with a consistent particle ordering. Near the ends of the sequence
    the taps are renormalised over the frames that exist.
    """
    frames = list(frames)
    if not frames:
        return []
    w = gaussian_weights(config.sigma, config.radius)
    stacked = _stack(frames)
    if isinstance(stacked, dict):
        sm = {k: _smooth_array(v, w, config.radius) for k, v in stacked.items()}
        return [{k: sm[k][t] for k in sm} for t in range(len(frames))]
    sm = _smooth_array(stacked, w, config.radius)
    return [sm[t] for t in range(len(frames))]


def keyframe_indices(n_frames: int, stride: int) -> list:
    return list(range(0, int(n_frames), int(stride)))


def _lerp(a, b, s):
    if isinstance(a, dict):
        return {k: _lerp(a[k], b[k], s) for k in a}
    return (1.0 - s) * np.asarray(a) + s * np.asarray(b)


def _copy(a):
    if isinstance(a, dict):
        return {k: np.array(v, dtype=np.float64) for k, v in a.items()}
    return np.array(a, dtype=np.float64)


def interpolate_keyframes(keyframes, stride: int, n_frames: int) -> list:
    """Fill all ``n_frames`` from deltas at frames ``0, k, 2k, ...``.

    In-between frames are linearly interpolated; frames after the last
    keyframe hold its value.
    """
    keys = keyframe_indices(n_frames, stride)
    keyframes = list(keyframes)
    if len(keyframes) != len(keys):
        raise InvalidArgument(f"expected {len(keys)} keyframes for {n_frames} frames at stride {stride}, got {len(keyframes)}")
    out = []
    for t in range(n_frames):
        a = t // stride
        s = (t - a * stride) / stride
        if s == 0 or a + 1 >= len(keyframes):
            out.append(_copy(keyframes[a]))
        else:
            out.append(_lerp(keyframes[a], keyframes[a + 1], s))
    return out


@dataclass
class SequenceResult:
    deltas: list  # per frame, attribute -> array
    keyframes: list
    traces: dict = field(default_factory=dict)  # keyframe index -> loss trace
    raw: list = field(default_factory=list)  # keyframe deltas before interpolation/smoothing


def stylize_sequence(frames, spec: GridSpec, config: StylizeConfig, temporal: TemporalConfig = TemporalConfig(), bases=None) -> SequenceResult:
    """Stylize every ``stride``-th frame, interpolate the rest, then smooth in time.

    With ``warm_start`` each keyframe starts from the previous keyframe's
    result, which requires the same particles (in the same order) throughout.
    """
    frames = list(frames)
    if not frames:
        raise InvalidArgument("empty frame sequence")
    keys = keyframe_indices(len(frames), temporal.stride)
    if temporal.warm_start and len({f.count for f in frames}) != 1:
        raise InvalidArgument("warm starts need a constant particle count across frames")
    raw, traces = [], {}
    prev = None
    for t in keys:
        base = None if bases is None else bases[t]
        res = stylize_frame(frames[t], spec, config, base=base, init=prev if temporal.warm_start else None)
        raw.append(res.deltas)
        traces[t] = res.trace
        prev = res.deltas
    full = interpolate_keyframes(raw, temporal.stride, len(frames))
    if temporal.radius > 0 and len(frames) > 1:
        full = smooth_temporal(full, temporal)
    return SequenceResult(full, keys, traces, raw)
