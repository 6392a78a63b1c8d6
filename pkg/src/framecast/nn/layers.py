"""Differentiable layer operations: exactly what the fusion/refinement
networks need, nothing more.

Image tensors are NCHW.  Convolution is cross-correlation.  Every op here
passes a central finite-difference gradient check (see the test suite).
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .tensor import Tensor, _result

__all__ = [
    "conv2d",
    "relu",
    "maxpool2",
    "upsample_bilinear",
    "concat_channels",
    "softmax",
    "matmul",
    "l1_loss",
]


def _pair(v):
    if isinstance(v, (tuple, list)):
        return int(v[0]), int(v[1])
    return int(v), int(v)


def _pad_input(x, ph, pw, pad_mode):
    if ph == 0 and pw == 0:
        return x
    if pad_mode == "zeros":
        return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    if pad_mode == "replicate":
        return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)), mode="edge")
    raise ValueError(f"unknown pad_mode {pad_mode!r}")


def _im2col(xp, kh, kw, sh, sw, out_h, out_w):
    n, c, _, _ = xp.shape
    sn, sc, sy, sx = xp.strides
    windows = as_strided(
        xp,
        shape=(n, c, kh, kw, out_h, out_w),
        strides=(sn, sc, sy, sx, sy * sh, sx * sw),
    )
    return windows.reshape(n, c * kh * kw, out_h * out_w)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride=1, padding=0, pad_mode: str = "zeros") -> Tensor:
    """Cross-correlation of NCHW input with (K, C, kh, kw) weights."""
    if x.data.ndim != 4:
        raise ValueError(f"conv2d input must be NCHW, got shape {x.shape}")
    if weight.data.ndim != 4:
        raise ValueError(f"conv2d weight must be (K, C, kh, kw), got shape {weight.shape}")
    n, c, h, w = x.shape
    k, cw, kh, kw = weight.shape
    if cw != c:
        raise ValueError(f"conv2d channel mismatch: input has {c}, weight expects {cw}")
    if bias is not None and bias.shape != (k,):
        raise ValueError(f"conv2d bias must have shape ({k},), got {bias.shape}")
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    out_h = (h + 2 * ph - kh) // sh + 1
    out_w = (w + 2 * pw - kw) // sw + 1
    if out_h < 1 or out_w < 1:
        raise ValueError(f"conv2d output would be empty for input {x.shape} and kernel {weight.shape}")

    xp = _pad_input(x.data, ph, pw, pad_mode)
    cols = _im2col(xp, kh, kw, sh, sw, out_h, out_w)
    w2 = weight.data.reshape(k, c * kh * kw)
    out = np.empty((n, k, out_h * out_w), dtype=x.data.dtype)
    for i in range(n):
        np.matmul(w2, cols[i], out=out[i])
    out = out.reshape(n, k, out_h, out_w)
    if bias is not None:
        out = out + bias.data.reshape(1, k, 1, 1)

    hp, wp = xp.shape[2], xp.shape[3]

    def backward(g):
        gout = g.reshape(n, k, out_h * out_w)
        if weight.requires_grad:
            gw = np.zeros((k, c * kh * kw), dtype=weight.data.dtype)
            for i in range(n):
                gw += gout[i] @ cols[i].T
            weight._accumulate(gw.reshape(weight.shape))
        if bias is not None and bias.requires_grad:
            bias._accumulate(gout.sum(axis=(0, 2)))
        if x.requires_grad:
            gcols = np.empty((n, c * kh * kw, out_h * out_w), dtype=x.data.dtype)
            for i in range(n):
                np.matmul(w2.T, gout[i], out=gcols[i])
            gcols = gcols.reshape(n, c, kh, kw, out_h, out_w)
            gxp = np.zeros((n, c, hp, wp), dtype=x.data.dtype)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + sh * out_h:sh, j:j + sw * out_w:sw] += gcols[:, :, i, j]
            if ph == 0 and pw == 0:
                gx = gxp
            elif pad_mode == "zeros":
                gx = gxp[:, :, ph:hp - ph, pw:wp - pw]
            else:  # replicate: fold border gradients onto the edge pixels
                gx = gxp[:, :, ph:hp - ph, pw:wp - pw].copy()
                if ph:
                    gx[:, :, 0, :] += gxp[:, :, :ph, pw:wp - pw].sum(axis=2)
                    gx[:, :, -1, :] += gxp[:, :, hp - ph:, pw:wp - pw].sum(axis=2)
                if pw:
                    gx[:, :, :, 0] += gxp[:, :, ph:hp - ph, :pw].sum(axis=3)
                    gx[:, :, :, -1] += gxp[:, :, ph:hp - ph, wp - pw:].sum(axis=3)
                if ph and pw:
                    gx[:, :, 0, 0] += gxp[:, :, :ph, :pw].sum(axis=(2, 3))
                    gx[:, :, 0, -1] += gxp[:, :, :ph, wp - pw:].sum(axis=(2, 3))
                    gx[:, :, -1, 0] += gxp[:, :, hp - ph:, :pw].sum(axis=(2, 3))
                    gx[:, :, -1, -1] += gxp[:, :, hp - ph:, wp - pw:].sum(axis=(2, 3))
            x._accumulate(gx)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _result(out, parents, backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def backward(g):
        x._accumulate(g * mask)

    return _result(x.data * mask, (x,), backward)


def maxpool2(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2; gradient routes to the argmax, ties
    breaking toward the first element in scan order."""
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool2 requires even spatial dims, got {(h, w)}")
    oh, ow = h // 2, w // 2
    windows = x.data.reshape(n, c, oh, 2, ow, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh, ow, 4)
    idx = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        gw = np.zeros((n, c, oh, ow, 4), dtype=x.data.dtype)
        np.put_along_axis(gw, idx[..., None], g[..., None], axis=-1)
        gx = gw.reshape(n, c, oh, ow, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
        x._accumulate(gx)

    return _result(out, (x,), backward)


def _upsample_matrix(out_len: int, factor: int, in_len: int, dtype) -> np.ndarray:
    """Row-stochastic interpolation matrix for one axis, half-pixel-aligned."""
    t = np.dtype(dtype).type
    src = (np.arange(out_len, dtype=dtype) + t(0.5)) / t(factor) - t(0.5)
    src = np.clip(src, 0.0, in_len - 1)
    i0 = np.minimum(np.floor(src), in_len - 2).astype(np.intp)
    frac = (src - i0).astype(dtype)
    m = np.zeros((out_len, in_len), dtype=dtype)
    rows = np.arange(out_len)
    m[rows, i0] = 1 - frac
    m[rows, i0 + 1] += frac
    return m


def upsample_bilinear(x: Tensor, factor: int) -> Tensor:
    """Bilinear upsampling by an integer factor (half-pixel-aligned).

    Separable: out = My @ x @ Mx^T per channel, so forward and backward are
    plain matrix products.
    """
    factor = int(factor)
    if factor < 1:
        raise ValueError(f"upsample factor must be >= 1, got {factor}")
    if factor == 1:
        return _result(x.data.copy(), (x,), lambda g: x._accumulate(g))
    _, _, h, w = x.shape
    dt = x.data.dtype
    my = _upsample_matrix(h * factor, factor, h, dt)
    mx = _upsample_matrix(w * factor, factor, w, dt)
    out = np.matmul(my, np.matmul(x.data, mx.T))

    def backward(g):
        x._accumulate(np.matmul(my.T, np.matmul(g, mx)))

    return _result(out, (x,), backward)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 4 or b.data.ndim != 4:
        raise ValueError("concat_channels expects NCHW tensors")
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ValueError(f"concat_channels: incompatible shapes {a.shape} vs {b.shape}")
    ca = a.shape[1]
    out = np.concatenate([a.data, b.data], axis=1)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g[:, :ca])
        if b.requires_grad:
            b._accumulate(g[:, ca:])

    return _result(out, (a, b), backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * s).sum(axis=axis, keepdims=True)
        x._accumulate((g - dot) * s)

    return _result(s, (x,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(f"matmul expects 2-D tensors, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: inner dims differ, {a.shape} vs {b.shape}")
    out = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return _result(out, (a, b), backward)


def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean absolute difference; the subgradient at zero is zero."""
    if pred.shape != target.shape:
        raise ValueError(f"l1_loss: shape mismatch {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    out = np.asarray(np.abs(diff).mean(), dtype=pred.data.dtype)
    inv_count = pred.data.dtype.type(1.0 / diff.size)

    def backward(g):
        s = np.sign(diff) * (g * inv_count)
        if pred.requires_grad:
            pred._accumulate(s)
        if target.requires_grad:
            target._accumulate(-s)

    return _result(out, (pred, target), backward)
