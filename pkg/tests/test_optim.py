import numpy as np
import pytest

from framecast import nn
from framecast.nn import AdamState, adam_step


def test_zero_gradient_leaves_params_unchanged():
    p = nn.Tensor(np.array([1.5, -2.0]), requires_grad=True)
    p.grad = np.zeros_like(p.data)
    state = AdamState(lr=0.1)
    adam_step([p], state)
    assert np.array_equal(p.data, [1.5, -2.0])
    assert state.step_count == 1
    assert p.grad is None  # cleared afterward


def test_first_step_is_lr_bias_corrected():
    p = nn.Tensor(np.array([0.0]), requires_grad=True)
    p.grad = np.ones(1, dtype=p.data.dtype)
    state = AdamState(lr=0.05)
    adam_step([p], state)
    assert p.data[0] == pytest.approx(-0.05, rel=1e-5)


def test_missing_gradient_rejected():
    p = nn.Tensor(np.zeros(2), requires_grad=True)
    with pytest.raises(ValueError, match="no gradient"):
        adam_step([p], AdamState())


def test_converges_on_quadratic():
    # minimize (x - 3)^2 from x = 0
    x = nn.Tensor(np.array([0.0], dtype=np.float64), requires_grad=True)
    state = AdamState(lr=0.1)
    for _ in range(200):
        x.grad = 2.0 * (x.data - 3.0)
        adam_step([x], state)
    assert abs(x.data[0] - 3.0) < 0.1


def test_state_tracks_parameter_count():
    p = nn.Tensor(np.zeros(2), requires_grad=True)
    q = nn.Tensor(np.zeros(3), requires_grad=True)
    p.grad = np.zeros(2, np.float32)
    q.grad = np.zeros(3, np.float32)
    state = AdamState()
    adam_step([p, q], state)
    p.grad = np.zeros(2, np.float32)
    with pytest.raises(ValueError, match="tracks"):
        adam_step([p], state)
