"""Grid primitives shared by the flow solver and the warper.

A scalar field is a 2-D float32 array indexed ``[row, col]`` = ``[y, x]``.
A flow field is an ``(H, W, 2)`` float32 array of per-pixel displacements,
channel 0 horizontal (x) and channel 1 vertical (y), in pixels.

All operations are pure functions; none of them mutates its inputs.
"""

import math

import numpy as np
from scipy.ndimage import gaussian_filter

__all__ = [
    "as_field",
    "as_frame",
    "as_flow",
    "sample_bilinear",
    "gradient",
    "forward_gradient",
    "divergence",
    "gaussian_smooth",
    "resize_bilinear",
    "downsample",
    "build_pyramid",
]


def as_field(a) -> np.ndarray:
    """Coerce to a finite 2-D float32 grid of at least 2x2."""
    f = np.ascontiguousarray(a, dtype=np.float32)
    if f.ndim != 2:
        raise ValueError(f"expected a 2-D grid, got shape {f.shape}")
    if f.shape[0] < 2 or f.shape[1] < 2:
        raise ValueError(f"grid must be at least 2x2, got {f.shape}")
    if not np.isfinite(f).all():
        raise ValueError("grid contains NaN or Inf")
    return f


def as_frame(a) -> np.ndarray:
    """Coerce to an intensity frame; values must already lie in [0, 1]."""
    f = as_field(a)
    lo, hi = float(f.min()), float(f.max())
    if lo < -1e-5 or hi > 1.0 + 1e-5:
        raise ValueError(f"frame values must lie in [0, 1], got [{lo:.6g}, {hi:.6g}]")
    return np.clip(f, 0.0, 1.0)


def as_flow(a) -> np.ndarray:
    """Coerce to a finite (H, W, 2) float32 displacement field."""
    f = np.ascontiguousarray(a, dtype=np.float32)
    if f.ndim != 3 or f.shape[2] != 2:
        raise ValueError(f"expected an (H, W, 2) flow field, got shape {f.shape}")
    if not np.isfinite(f).all():
        raise ValueError("flow contains NaN or Inf")
    return f


def sample_bilinear(field, x, y) -> np.ndarray:
    """Sample ``field`` at continuous coordinates (x, y).

    Coordinates outside the grid are clamped to the border (replicate
    padding).  Sampling at integer coordinates reproduces stored values
    bit-exactly.  ``x`` and ``y`` may be scalars or arrays of any shape.
    """
    f = np.asarray(field, dtype=np.float32)
    h, w = f.shape
    x = np.clip(np.asarray(x, dtype=np.float32), 0.0, np.float32(w - 1))
    y = np.clip(np.asarray(y, dtype=np.float32), 0.0, np.float32(h - 1))
    x0 = np.minimum(np.floor(x), w - 2).astype(np.intp)
    y0 = np.minimum(np.floor(y), h - 2).astype(np.intp)
    fx = x - x0.astype(np.float32)
    fy = y - y0.astype(np.float32)
    top = f[y0, x0] * (1.0 - fx) + f[y0, x0 + 1] * fx
    bottom = f[y0 + 1, x0] * (1.0 - fx) + f[y0 + 1, x0 + 1] * fx
    return top * (1.0 - fy) + bottom * fy


def gradient(field):
    """Central-difference gradient, one-sided at the borders.

    Returns ``(gx, gy)`` with the same dims as the input.
    """
    f = np.asarray(field, dtype=np.float32)
    gx = np.empty_like(f)
    gx[:, 1:-1] = (f[:, 2:] - f[:, :-2]) * 0.5
    gx[:, 0] = f[:, 1] - f[:, 0]
    gx[:, -1] = f[:, -1] - f[:, -2]
    gy = np.empty_like(f)
    gy[1:-1, :] = (f[2:, :] - f[:-2, :]) * 0.5
    gy[0, :] = f[1, :] - f[0, :]
    gy[-1, :] = f[-1, :] - f[-2, :]
    return gx, gy


def forward_gradient(field):
    """Forward-difference gradient with zero last column/row.

    This is the discretization whose negative adjoint is ``divergence``;
    the pair drives the dual projection of the TV solver.
    """
    f = np.asarray(field, dtype=np.float32)
    gx = np.zeros_like(f)
    gx[:, :-1] = f[:, 1:] - f[:, :-1]
    gy = np.zeros_like(f)
    gy[:-1, :] = f[1:, :] - f[:-1, :]
    return gx, gy


def divergence(px, py) -> np.ndarray:
    """Backward-difference divergence, the negative adjoint of
    :func:`forward_gradient`: ``<grad u, p> == -<u, div p>`` for all u, p."""
    px = np.asarray(px, dtype=np.float32)
    py = np.asarray(py, dtype=np.float32)
    if px.shape != py.shape:
        raise ValueError(f"component shapes differ: {px.shape} vs {py.shape}")
    div = np.empty_like(px)
    div[:, 0] = px[:, 0]
    div[:, 1:-1] = px[:, 1:-1] - px[:, :-2]
    div[:, -1] = -px[:, -2]
    dy = np.empty_like(py)
    dy[0, :] = py[0, :]
    dy[1:-1, :] = py[1:-1, :] - py[:-2, :]
    dy[-1, :] = -py[-2, :]
    div += dy
    return div


def gaussian_smooth(field, sigma: float) -> np.ndarray:
    """Gaussian blur with replicate borders; sigma <= 0 is the identity."""
    f = np.asarray(field, dtype=np.float32)
    if sigma <= 1e-3:
        return f.copy()
    return gaussian_filter(f, sigma, mode="nearest")


def resize_bilinear(field, out_shape) -> np.ndarray:
    """Resample to ``out_shape = (h, w)`` with border-to-border bilinear
    interpolation."""
    f = np.asarray(field, dtype=np.float32)
    h, w = f.shape
    out_h, out_w = int(out_shape[0]), int(out_shape[1])
    if out_h < 1 or out_w < 1:
        raise ValueError(f"invalid output shape {(out_h, out_w)}")
    if (out_h, out_w) == (h, w):
        return f.copy()
    xs = np.arange(out_w, dtype=np.float32)
    ys = np.arange(out_h, dtype=np.float32)
    if out_w > 1:
        xs *= np.float32((w - 1) / (out_w - 1))
    if out_h > 1:
        ys *= np.float32((h - 1) / (out_h - 1))
    gx, gy = np.meshgrid(xs, ys)
    return sample_bilinear(f, gx, gy)


def downsample(field, factor: float) -> np.ndarray:
    """Shrink by ``factor`` in (0, 1): Gaussian pre-smoothing followed by
    bilinear resampling to ceil(dims * factor)."""
    f = as_field(field)
    if not 0.0 < factor < 1.0:
        raise ValueError(f"downsample factor must be in (0, 1), got {factor}")
    h, w = f.shape
    out_h = math.ceil(h * factor)
    out_w = math.ceil(w * factor)
    if out_h < 2 or out_w < 2:
        raise ValueError(
            f"degenerate output size {(out_h, out_w)} for input {(h, w)} at factor {factor}"
        )
    sigma = 0.8 * math.sqrt(1.0 / factor**2 - 1.0)
    return resize_bilinear(gaussian_smooth(f, sigma), (out_h, out_w))


def build_pyramid(field, factor: float = 0.5, min_dim: int = 16) -> list:
    """Repeatedly downsample until the next level would drop below
    ``min_dim``; level 0 is the input unchanged, deeper levels are coarser."""
    f = as_field(field)
    if not 0.0 < factor < 1.0:
        raise ValueError(f"pyramid factor must be in (0, 1), got {factor}")
    if min_dim < 2:
        raise ValueError(f"min_dim must be >= 2, got {min_dim}")
    levels = [f]
    while True:
        h, w = levels[-1].shape
        nh, nw = math.ceil(h * factor), math.ceil(w * factor)
        if min(nh, nw) < min_dim or (nh, nw) == (h, w):
            break
        levels.append(downsample(levels[-1], factor))
    return levels
