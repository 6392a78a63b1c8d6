"""Training loop for the refinement model.

Each sample's warped frame is produced by the flow/warp pipeline once per
triplet (it does not depend on network state); crops and rotations are
drawn fresh every step and applied identically to all four fields of a
sample (both inputs, the warped frame, and the target).
"""

from dataclasses import dataclass

import numpy as np

from . import nn
from .dataio import augment_fields
from .refinement import Refiner, forward_tensor
from .tvl1 import Tvl1Params
from .warping import flow_between, warp_backward

__all__ = ["TrainOptions", "NumericalError", "prepare_samples", "train"]


class NumericalError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass(frozen=True)
class TrainOptions:
    steps: int = 200
    batch_size: int = 8
    lr: float = 1e-4
    crop: tuple | None = (64, 64)
    rot90: bool = True
    seed: int = 0
    mode: str = "interp"

    def validate(self) -> None:
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr < 0:
            raise ValueError(f"lr must be >= 0, got {self.lr}")
        if self.mode not in ("interp", "future"):
            raise ValueError(f"mode must be 'interp' or 'future', got {self.mode!r}")


def prepare_samples(triplets, flow_params: Tvl1Params | None = None,
                    mode: str = "interp") -> list:
    """Compute the warped frame for every triplet, returning
    (first, second, warped, target) 4-tuples."""
    samples = []
    for t in triplets:
        flow = flow_between(t.first, t.second, flow_params)
        if mode == "interp":
            warped = warp_backward(t.first, flow, 0.5)
        else:
            warped = warp_backward(t.second, flow, 1.0)
        samples.append((t.first, t.second, warped, t.target))
    return samples


def train(model: Refiner, triplets, opts: TrainOptions = TrainOptions(),
          flow_params: Tvl1Params | None = None) -> list:
    """Minimize mean L1 between refined output and target with Adam.

    Returns the per-step loss history (loss measured before each update).
    """
    opts.validate()
    triplets = list(triplets)
    if not triplets:
        raise ValueError("training dataset is empty")
    samples = prepare_samples(triplets, flow_params, opts.mode)

    rng = np.random.default_rng(opts.seed)
    params = model.parameters()
    state = nn.AdamState(lr=opts.lr)
    history = []

    for step in range(opts.steps):
        idx = rng.integers(0, len(samples), size=opts.batch_size)
        loss = None
        for i in idx:
            first, second, warped, target = samples[i]
            if opts.crop is not None:
                first, second, warped, target = augment_fields(
                    [first, second, warped, target], rng, opts.crop, rotate=opts.rot90
                )
            out = forward_tensor(model, first, second, warped)
            sample_loss = nn.l1_loss(out, nn.Tensor(target.reshape(out.shape)))
            loss = sample_loss if loss is None else nn.add(loss, sample_loss)
        loss = nn.scale(loss, 1.0 / opts.batch_size)
        value = loss.item()
        if not np.isfinite(value):
            raise NumericalError(f"non-finite loss {value} at step {step}")
        history.append(value)
        loss.backward()
        nn.adam_step(params, state)
    return history
