import math

import numpy as np

from fluidstyle.optim import AdamState, adam_step


def scalar_adam(grads, lr=0.01, b1=0.9, b2=0.999, eps=1e-8, x=0.0):
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x -= lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
    return x


def test_matches_textbook_loop():
    grads = [0.5, -1.0, 2.0, 0.25, -0.1]
    state = AdamState(lr=0.05)
    p = {"a": np.array([1.0])}
    for g in grads:
        p, state = adam_step(state, p, {"a": np.array([g])})
    assert state.step == 5
    assert abs(p["a"][0] - scalar_adam(grads, lr=0.05, x=1.0)) < 1e-15


def test_first_step_is_lr_times_sign():
    p, _ = adam_step(AdamState(lr=0.01), {"x": np.array([0.0, 0.0, 3.0])}, {"x": np.array([4.0, -1e-3, 0.0])})
    np.testing.assert_allclose(p["x"], [-0.01 * 4 / (4 + 1e-8), 0.01 * 1e-3 / (1e-3 + 1e-8), 3.0], rtol=1e-12)


def test_pure_update():
    params = {"x": np.array([1.0, 2.0])}
    grads = {"x": np.array([0.1, 0.2])}
    state = AdamState()
    new, new_state = adam_step(state, params, grads)
    np.testing.assert_array_equal(params["x"], [1.0, 2.0])
    assert state.step == 0 and state.m == {}
    assert new_state.step == 1 and not np.array_equal(new["x"], params["x"])


def test_minimizes_quadratic():
    target = np.array([1.0, -2.0, 0.5])
    p = {"x": np.zeros(3)}
    state = AdamState(lr=0.05)
    for _ in range(2000):
        p, state = adam_step(state, p, {"x": 2 * (p["x"] - target)})
    np.testing.assert_allclose(p["x"], target, atol=1e-3)


def test_parabola_ten_steps():
    p = {"x": np.array([1.0])}
    state = AdamState(lr=0.1)
    xs = [1.0]
    for _ in range(10):
        p, state = adam_step(state, p, {"x": 2 * p["x"]})
        xs.append(abs(p["x"][0]))
    assert all(b < a for a, b in zip(xs, xs[1:]))
    assert xs[-1] < 1.0


def test_zero_gradient_keeps_params():
    p, s = adam_step(AdamState(), {"x": np.array([2.0, -1.0])}, {"x": np.zeros(2)})
    np.testing.assert_array_equal(p["x"], [2.0, -1.0])
    assert s.step == 1
