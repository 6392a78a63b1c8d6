"""Adam optimizer over tape parameters."""

from dataclasses import dataclass, field

import numpy as np

__all__ = ["AdamState", "adam_step"]


@dataclass
class AdamState:
    """Optimizer hyperparameters plus per-parameter moment buffers.

    Moments are allocated lazily on the first step and stay aligned with
    the parameter list passed to :func:`adam_step`.
    """

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params, state: AdamState) -> None:
    """One bias-corrected Adam update; gradients are cleared afterward."""
    params = list(params)
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    if len(state.m) != len(params):
        raise ValueError(
            f"optimizer state tracks {len(state.m)} parameters, got {len(params)}"
        )
    for p, m in zip(params, state.m):
        if p.grad is None:
            raise ValueError("adam_step: parameter has no gradient; run backward() first")
        if p.grad.shape != m.shape:
            raise ValueError(f"gradient shape {p.grad.shape} does not match state {m.shape}")

    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for p, m, v in zip(params, state.m, state.v):
        g = p.grad
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        p.data -= (state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.data.dtype)
        p.grad = None
