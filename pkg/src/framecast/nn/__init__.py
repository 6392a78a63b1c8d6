"""Tensor substrate: autodiff tape, layer ops, Adam, checkpointing."""

from .tensor import Tensor, add, mul, scale, total_sum, reshape, transpose, clamp01
from .layers import (
    conv2d,
    relu,
    maxpool2,
    upsample_bilinear,
    concat_channels,
    softmax,
    matmul,
    l1_loss,
)
from .optim import AdamState, adam_step
from .checkpoint import CheckpointError, save_tensors, load_tensors

__all__ = [
    "Tensor",
    "add",
    "mul",
    "scale",
    "total_sum",
    "reshape",
    "transpose",
    "clamp01",
    "conv2d",
    "relu",
    "maxpool2",
    "upsample_bilinear",
    "concat_channels",
    "softmax",
    "matmul",
    "l1_loss",
    "AdamState",
    "adam_step",
    "CheckpointError",
    "save_tensors",
    "load_tensors",
]
