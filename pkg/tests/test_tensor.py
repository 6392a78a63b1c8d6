import numpy as np
import pytest

from framecast import nn

from oracles import fd_gradient, rel_error


def test_rejects_non_finite():
    with pytest.raises(ValueError, match="NaN"):
        nn.Tensor(np.array([1.0, np.nan]))


def test_dtype_coercion():
    t = nn.Tensor(np.arange(4))
    assert t.dtype == np.float32
    t64 = nn.Tensor(np.arange(4, dtype=np.float64))
    assert t64.dtype == np.float64


def test_backward_requires_scalar():
    t = nn.Tensor(np.zeros((2, 2)), requires_grad=True)
    with pytest.raises(ValueError, match="scalar"):
        t.backward()


def test_requires_grad_propagation():
    a = nn.Tensor(np.ones(3), requires_grad=True)
    b = nn.Tensor(np.ones(3))
    assert nn.add(a, b).requires_grad
    assert not nn.add(b, b).requires_grad


def test_grad_accumulates_across_uses():
    a = nn.Tensor(np.array([2.0, 3.0]), requires_grad=True)
    loss = nn.total_sum(nn.add(a, a))
    loss.backward()
    assert np.array_equal(a.grad, np.array([2.0, 2.0]))


def test_shape_mismatch_rejected():
    a = nn.Tensor(np.ones((2, 3)))
    b = nn.Tensor(np.ones((3, 2)))
    with pytest.raises(ValueError, match="mismatch"):
        nn.add(a, b)
    with pytest.raises(ValueError, match="mismatch"):
        nn.mul(a, b)


@pytest.mark.parametrize("op_name", ["add", "mul", "scale", "reshape", "transpose", "clamp01"])
def test_elementwise_ops_match_finite_differences(op_name):
    rng = np.random.default_rng(hash(op_name) % 2**32)
    a = nn.Tensor(rng.uniform(0.1, 0.9, (3, 4)), requires_grad=True)
    b = nn.Tensor(rng.uniform(-1.0, 1.0, (3, 4)), requires_grad=True)
    proj = nn.Tensor(rng.standard_normal((4, 3)) if op_name == "transpose" else rng.standard_normal((3, 4)))
    if op_name == "reshape":
        proj = nn.Tensor(rng.standard_normal((12,)))

    def build():
        if op_name == "add":
            out = nn.add(a, b)
        elif op_name == "mul":
            out = nn.mul(a, b)
        elif op_name == "scale":
            out = nn.scale(a, -1.7)
        elif op_name == "reshape":
            out = nn.reshape(a, (12,))
        elif op_name == "transpose":
            out = nn.transpose(a, (1, 0))
        else:
            out = nn.clamp01(a)
        return nn.total_sum(nn.mul(out, proj))

    loss = build()
    loss.backward()
    fd = fd_gradient(lambda: build().item(), a.data, h=1e-6)
    assert rel_error(a.grad, fd) < 1e-6


def test_gradients_deterministic():
    rng = np.random.default_rng(5)
    data = rng.standard_normal((4, 4))

    def run():
        a = nn.Tensor(data.copy(), requires_grad=True)
        loss = nn.total_sum(nn.mul(nn.clamp01(a), a))
        loss.backward()
        return loss.item(), a.grad.copy()

    l1, g1 = run()
    l2, g2 = run()
    assert l1 == l2
    assert np.array_equal(g1, g2)
