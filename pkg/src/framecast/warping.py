"""Alpha-scaled backward warping, frame interpolation/extrapolation, and
iterative multi-step rollout.

``alpha`` is the time fraction along the inter-frame interval: 0.5 yields
the temporal midpoint, and with the second frame as the base, alpha > 0
continues the observed motion into the future.
"""

import numpy as np

from .grid import as_flow, as_frame, sample_bilinear
from .tvl1 import Tvl1Params, estimate_flow

__all__ = ["warp_backward", "flow_between", "interpolate", "extrapolate", "rollout"]


def warp_backward(base, flow, alpha: float) -> np.ndarray:
    """out(x) = base(x + alpha * flow(x)), clamped to [0, 1].

    alpha = 0 returns ``base`` bit-exactly; sampling outside the grid
    replicates the border.
    """
    b = as_frame(base)
    f = as_flow(flow)
    if f.shape[:2] != b.shape:
        raise ValueError(f"flow dims {f.shape[:2]} do not match base dims {b.shape}")
    if not np.isfinite(alpha):
        raise ValueError(f"alpha must be finite, got {alpha}")
    h, w = b.shape
    X, Y = np.meshgrid(np.arange(w, dtype=np.float32), np.arange(h, dtype=np.float32))
    a = np.float32(alpha)
    out = sample_bilinear(b, X + a * f[:, :, 0], Y + a * f[:, :, 1])
    return np.clip(out, 0.0, 1.0)


def flow_between(frame_t, frame_t1, params: Tvl1Params | None = None) -> np.ndarray:
    """Flow used by both interpolation and extrapolation: the field that
    pulls ``frame_t`` onto ``frame_t1`` by backward warping."""
    return estimate_flow(frame_t1, frame_t, params)


def interpolate(frame_t, frame_t1, alpha: float,
                params: Tvl1Params | None = None) -> np.ndarray:
    """Synthesize the frame a fraction ``alpha`` of the way from t to t+1."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"interpolation alpha must be in [0, 1], got {alpha}")
    flow = flow_between(frame_t, frame_t1, params)
    return warp_backward(frame_t, flow, alpha)


def extrapolate(frame_t, frame_t1, alpha: float, params: Tvl1Params | None = None,
                reverse_time: bool = False) -> np.ndarray:
    """Predict the frame at t + 1 + alpha by warping ``frame_t1`` along the
    motion observed between the inputs.

    ``reverse_time`` flips the displacement field, sampling against the
    motion direction instead of continuing it.
    """
    if alpha < 0.0:
        raise ValueError(f"extrapolation alpha must be >= 0, got {alpha}")
    flow = flow_between(frame_t, frame_t1, params)
    if reverse_time:
        flow = -flow
    return warp_backward(frame_t1, flow, alpha)


def rollout(frame_t, frame_t1, steps: int, params: Tvl1Params | None = None,
            refiner=None) -> list:
    """Iterated one-step-ahead prediction.

    Each step extrapolates with alpha = 1 and feeds (previous frame,
    prediction) back as the next input pair.  ``refiner``, when given, is a
    callable ``(frame_t, frame_t1, warped) -> frame`` applied to every
    prediction before it is emitted and reused.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    a = as_frame(frame_t)
    b = as_frame(frame_t1)
    predictions = []
    for _ in range(steps):
        pred = extrapolate(a, b, 1.0, params)
        if refiner is not None:
            pred = as_frame(refiner(a, b, pred))
        predictions.append(pred)
        a, b = b, pred
    return predictions
