"""Adam optimizer: analytic first-step, hand-traced recurrence, error paths."""

import numpy as np
import pytest

from crimkit.optim import AdamState, adam_step
from crimkit.tensor import NonFiniteError, Tensor


def make_params(values):
    return {k: Tensor(np.asarray(v, dtype=np.float32), requires_grad=True)
            for k, v in values.items()}


def test_zero_gradients_leave_params_unchanged():
    params = make_params({"w": [1.0, -2.0, 3.0]})
    st = AdamState.init(params, lr=0.1)
    before = params["w"].data.copy()
    adam_step(params, {"w": np.zeros(3, dtype=np.float32)}, st)
    assert np.array_equal(params["w"].data, before)
    assert st.step == 1


def test_first_step_moves_by_lr_sign():
    # At step 1 the bias corrections force m_hat = g and v_hat = g^2, so the
    # update is -lr * g / (|g| + eps) ~= -lr * sign(g).
    g = np.array([0.5, -2.0, 1e-3], dtype=np.float32)
    params = make_params({"w": [0.0, 0.0, 0.0]})
    st = AdamState.init(params, lr=0.1)
    adam_step(params, {"w": g}, st)
    expected = -0.1 * g / (np.abs(g) + st.eps)
    assert np.allclose(params["w"].data, expected, rtol=1e-5)
    assert np.allclose(params["w"].data, -0.1 * np.sign(g), atol=1e-4)


def adam_reference_trace(g, lr, b1, b2, eps, steps):
    """Scalar Adam recurrence in float64, independent of the implementation."""
    p, m, v = 0.0, 0.0, 0.0
    for t in range(1, steps + 1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        p -= lr * mhat / (np.sqrt(vhat) + eps)
    return p


def test_two_steps_match_hand_trace():
    params = make_params({"w": [0.0]})
    st = AdamState.init(params, lr=0.1)
    g = np.array([1.0], dtype=np.float32)
    adam_step(params, {"w": g}, st)
    adam_step(params, {"w": g}, st)
    ref = adam_reference_trace(1.0, 0.1, 0.9, 0.999, st.eps, 2)
    assert np.allclose(params["w"].data[0], ref, rtol=1e-5)
    assert st.step == 2


def test_nan_gradient_skips_update_and_raises():
    params = make_params({"w": [1.0], "b": [2.0]})
    st = AdamState.init(params)
    before_w = params["w"].data.copy()
    before_step = st.step
    bad = {"w": np.array([np.nan], dtype=np.float32),
           "b": np.array([1.0], dtype=np.float32)}
    with pytest.raises(NonFiniteError):
        adam_step(params, bad, st)
    assert np.array_equal(params["w"].data, before_w)
    assert np.array_equal(params["b"].data, [2.0])
    assert st.step == before_step


def test_state_shapes_match_params():
    params = make_params({"w": np.ones((2, 3)), "k": np.ones((4,))})
    st = AdamState.init(params)
    for name, p in params.items():
        assert st.m[name].shape == p.data.shape
        assert st.v[name].shape == p.data.shape


def test_grad_shape_mismatch_rejected():
    params = make_params({"w": np.ones((2, 3))})
    st = AdamState.init(params)
    with pytest.raises(ValueError):
        adam_step(params, {"w": np.ones((3, 2), dtype=np.float32)}, st)
