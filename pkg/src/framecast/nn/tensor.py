"""Minimal reverse-mode autodiff tape over numpy arrays.

Float32 is the working precision; float64 is supported end to end for
strict gradient checking.  Graphs are built whenever an input requires a
gradient and are released with the tensors themselves.
"""

import numpy as np

__all__ = [
    "Tensor",
    "add",
    "mul",
    "scale",
    "total_sum",
    "reshape",
    "transpose",
    "clamp01",
]


class Tensor:
    """N-D value array with optional participation in the gradient tape."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        if not np.isfinite(arr).all():
            raise ValueError("tensor data contains NaN or Inf")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self) -> None:
        """Reverse-mode sweep seeded with d(self)/d(self) = 1; ``self`` must
        be a scalar."""
        if self.data.size != 1:
            raise ValueError(f"backward() requires a scalar, got shape {self.shape}")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __add__(self, other):
        return add(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"


def _result(data, parents, backward):
    requires = any(p.requires_grad for p in parents)
    if not requires:
        return Tensor(data)
    return Tensor(data, requires_grad=True,
                  _parents=tuple(p for p in parents if p.requires_grad),
                  _backward=backward)


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "add")
    out_data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(g)

    return _result(out_data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of same-shape tensors."""
    _check_same_shape(a, b, "mul")
    out_data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * b.data)
        if b.requires_grad:
            b._accumulate(g * a.data)

    return _result(out_data, (a, b), backward)


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    out_data = a.data * a.data.dtype.type(s)

    def backward(g):
        a._accumulate(g * a.data.dtype.type(s))

    return _result(out_data, (a,), backward)


def total_sum(a: Tensor) -> Tensor:
    """Sum of all elements, as a scalar tensor."""
    out_data = np.asarray(a.data.sum(), dtype=a.data.dtype)

    def backward(g):
        a._accumulate(np.broadcast_to(g, a.shape))

    return _result(out_data, (a,), backward)


def reshape(a: Tensor, shape) -> Tensor:
    out_data = a.data.reshape(shape)

    def backward(g):
        a._accumulate(g.reshape(a.shape))

    return _result(out_data, (a,), backward)


def transpose(a: Tensor, axes=None) -> Tensor:
    out_data = np.transpose(a.data, axes)
    inv = None if axes is None else np.argsort(axes)

    def backward(g):
        a._accumulate(np.transpose(g, inv))

    return _result(out_data, (a,), backward)


def clamp01(a: Tensor) -> Tensor:
    """Clamp to [0, 1]; gradient passes through inside the bounds."""
    out_data = np.clip(a.data, 0.0, 1.0)
    mask = (a.data >= 0.0) & (a.data <= 1.0)

    def backward(g):
        a._accumulate(g * mask)

    return _result(out_data, (a,), backward)
