"""Bias-corrected Adam on dictionaries of numpy arrays."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["AdamState", "adam_step"]


@dataclass
class AdamState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, params: dict, grads: dict):
    """One Adam update; returns ``(new_params, new_state)`` without touching the inputs."""
    t = state.step + 1
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    new_params, m_new, v_new = {}, {}, {}
    for k, p in params.items():
        g = np.asarray(grads[k], dtype=np.float64)
        m = state.m.get(k, np.zeros_like(p))
        v = state.v.get(k, np.zeros_like(p))
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        new_params[k] = p - state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        m_new[k], v_new[k] = m, v
    new_state = AdamState(state.lr, state.beta1, state.beta2, state.eps, t, m_new, v_new)
    return new_params, new_state
