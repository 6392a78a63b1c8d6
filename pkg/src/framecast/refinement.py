"""Learned correction stage: a non-local multi-frame fusion layer feeding
an encoder-decoder that refines a warped frame.

The fusion layer embeds the two observed frames and the warped frame with
1x1 convolutions, computes a spatial affinity between the first-frame
embedding (query) and second-frame embedding (key) on a downsampled grid,
applies the softmax-normalized weights to the warped-frame embedding
(value), and residual-adds the full-resolution value embedding.  The
refinement head is zero-initialized, so an untrained model is the identity
on the warped frame when ``residual_output`` is enabled.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import nn
from .grid import as_frame
from .nn.checkpoint import CheckpointError

__all__ = [
    "RefinerConfig",
    "Refiner",
    "fuse",
    "non_local_attention",
    "refine",
    "refine_frame",
    "frame_refiner",
]


@dataclass(frozen=True)
class RefinerConfig:
    embed_channels: int = 32
    enc_levels: int = 3
    base_channels: int = 16
    attention_downsample: int = 4
    residual_output: bool = True
    swap_query_key: bool = False
    init_seed: int = 0

    def validate(self) -> None:
        if self.embed_channels < 1:
            raise ValueError(f"embed_channels must be >= 1, got {self.embed_channels}")
        if self.enc_levels < 1:
            raise ValueError(f"enc_levels must be >= 1, got {self.enc_levels}")
        if self.base_channels < 1:
            raise ValueError(f"base_channels must be >= 1, got {self.base_channels}")
        d = self.attention_downsample
        if d < 1 or (d & (d - 1)) != 0:
            raise ValueError(f"attention_downsample must be a power of 2, got {d}")

    @property
    def spatial_divisor(self) -> int:
        """Input dims must be divisible by this (attention grid + encoder depth)."""
        return max(self.attention_downsample, 2 ** (self.enc_levels - 1))


def _kaiming_uniform(rng, shape):
    fan_in = int(np.prod(shape[1:]))
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class Refiner:
    """Parameter collection for the fusion + refinement networks.

    Parameters live in an ordered name -> Tensor mapping; the set of names
    and shapes is fully determined by the config.
    """

    def __init__(self, config: RefinerConfig, params: dict):
        config.validate()
        self.config = config
        self.params = params

    @classmethod
    def build(cls, config: RefinerConfig = RefinerConfig()) -> "Refiner":
        """Kaiming-uniform conv weights, zero biases, zero final head."""
        config.validate()
        rng = np.random.default_rng(config.init_seed)
        c = config.embed_channels
        params: dict = {}

        def conv(name, k_out, k_in, ksize, zero=False):
            shape = (k_out, k_in, ksize, ksize)
            w = np.zeros(shape, np.float32) if zero else _kaiming_uniform(rng, shape)
            params[f"{name}.weight"] = nn.Tensor(w, requires_grad=True)
            params[f"{name}.bias"] = nn.Tensor(np.zeros(k_out, np.float32), requires_grad=True)

        conv("embed_query", c, 1, 1)
        conv("embed_key", c, 1, 1)
        conv("embed_value", c, 1, 1)
        conv("fuse_proj", c, c, 1)

        # encoder blocks downsample with a stride-2 first conv (level > 0)
        chans = [config.base_channels * 2**i for i in range(config.enc_levels)]
        in_ch = c
        for i, ch in enumerate(chans):
            conv(f"enc{i}.conv1", ch, in_ch, 3)
            conv(f"enc{i}.conv2", ch, ch, 3)
            in_ch = ch
        for i in range(config.enc_levels - 2, -1, -1):
            conv(f"dec{i}.conv1", chans[i], chans[i + 1] + chans[i], 3)
            conv(f"dec{i}.conv2", chans[i], chans[i], 3)
        conv("head", 1, chans[0], 1, zero=True)
        return cls(config, params)

    def parameters(self):
        return list(self.params.values())

    def _conv(self, x, name, padding=0, stride=1):
        return nn.conv2d(x, self.params[f"{name}.weight"], self.params[f"{name}.bias"],
                         stride=stride, padding=padding)

    def save(self, path) -> None:
        meta = {"kind": "refiner", "config": asdict(self.config)}
        nn.save_tensors(path, {k: v.data for k, v in self.params.items()}, meta)

    @classmethod
    def load(cls, path, config: RefinerConfig | None = None) -> "Refiner":
        meta, arrays = nn.load_tensors(path)
        if meta.get("kind") != "refiner":
            raise CheckpointError(f"{path}: not a refiner checkpoint")
        stored = RefinerConfig(**meta["config"])
        if config is not None and config != stored:
            raise CheckpointError(
                f"{path}: checkpoint config {stored} does not match requested {config}"
            )
        template = cls.build(stored)
        if set(arrays) != set(template.params):
            missing = set(template.params) ^ set(arrays)
            raise CheckpointError(f"{path}: parameter names do not match config: {sorted(missing)}")
        for name, tensor in template.params.items():
            if arrays[name].shape != tensor.data.shape:
                raise CheckpointError(
                    f"{path}: shape mismatch for {name}: {arrays[name].shape} vs {tensor.data.shape}"
                )
            tensor.data = arrays[name].astype(np.float32)
        return template


def _check_dims(model: Refiner, h: int, w: int) -> None:
    d = model.config.spatial_divisor
    if h % d or w % d:
        raise ValueError(f"input dims {(h, w)} must be divisible by {d} for this config")


def _field_tensor(frame) -> nn.Tensor:
    f = as_frame(frame)
    return nn.Tensor(f.reshape(1, 1, *f.shape))


def non_local_attention(query: nn.Tensor, key: nn.Tensor, value: nn.Tensor) -> nn.Tensor:
    """Attend over all spatial positions of [1, C, h, w] embeddings.

    Affinity logits are dot products between query and key vectors,
    softmax-normalized per query position, then applied to the value.
    """
    _, c, h, w = query.shape
    n = h * w

    def flatten(t):  # [1, C, h, w] -> [n, C]
        return nn.transpose(nn.reshape(t, (c, n)), (1, 0))

    q = flatten(query)
    k = flatten(key)
    v = flatten(value)
    logits = nn.matmul(q, nn.transpose(k, (1, 0)))
    attn = nn.softmax(logits, axis=1)
    out = nn.matmul(attn, v)
    return nn.reshape(nn.transpose(out, (1, 0)), (1, c, h, w))


def fuse(model: Refiner, frame_t, frame_t1, warped) -> nn.Tensor:
    """Multi-frame fusion feature map, [1, embed_channels, H, W].

    The affinity grid is the embedding evaluated on a strided lattice: a
    1x1 conv applied at stride d equals subsampling the full-resolution
    embedding, and keeps the whole layer piecewise-smooth.
    """
    ft = _field_tensor(frame_t)
    ft1 = _field_tensor(frame_t1)
    fw = _field_tensor(warped)
    for other in (ft1, fw):
        if other.shape != ft.shape:
            raise ValueError(f"fusion inputs must share dims, got {ft.shape} vs {other.shape}")
    h, w = ft.shape[2:]
    _check_dims(model, h, w)

    d = model.config.attention_downsample
    q_name, k_name = ("embed_key", "embed_query") if model.config.swap_query_key \
        else ("embed_query", "embed_key")
    q = model._conv(ft, q_name, stride=d)
    k = model._conv(ft1, k_name, stride=d)
    v_grid = model._conv(fw, "embed_value", stride=d)
    v_full = model._conv(fw, "embed_value")

    attended = nn.upsample_bilinear(non_local_attention(q, k, v_grid), d)
    return nn.add(model._conv(attended, "fuse_proj"), v_full)


def _refine_tensor(model: Refiner, fused: nn.Tensor, base: nn.Tensor | None) -> nn.Tensor:
    cfg = model.config
    if fused.data.ndim != 4 or fused.shape[1] != cfg.embed_channels:
        raise ValueError(
            f"fused input shape {fused.shape} does not match embed_channels={cfg.embed_channels}"
        )
    x = fused
    skips = []
    for i in range(cfg.enc_levels):
        stride = 1 if i == 0 else 2
        x = nn.relu(model._conv(x, f"enc{i}.conv1", padding=1, stride=stride))
        x = nn.relu(model._conv(x, f"enc{i}.conv2", padding=1))
        if i < cfg.enc_levels - 1:
            skips.append(x)
    for i in range(cfg.enc_levels - 2, -1, -1):
        x = nn.upsample_bilinear(x, 2)
        x = nn.concat_channels(x, skips[i])
        x = nn.relu(model._conv(x, f"dec{i}.conv1", padding=1))
        x = nn.relu(model._conv(x, f"dec{i}.conv2", padding=1))
    out = model._conv(x, "head")
    if cfg.residual_output:
        if base is None:
            raise ValueError("residual_output requires the warped base frame")
        out = nn.add(out, base)
    return nn.clamp01(out)


def refine(model: Refiner, fused: nn.Tensor, base=None) -> np.ndarray:
    """Run the encoder-decoder on a fused feature map; ``base`` is the
    warped frame the residual head corrects."""
    base_t = _field_tensor(base) if base is not None else None
    out = _refine_tensor(model, fused, base_t)
    return out.data.reshape(out.shape[2], out.shape[3]).copy()


def forward_tensor(model: Refiner, frame_t, frame_t1, warped) -> nn.Tensor:
    """fuse + refine as one differentiable graph (training path)."""
    fused = fuse(model, frame_t, frame_t1, warped)
    base = _field_tensor(warped) if model.config.residual_output else None
    return _refine_tensor(model, fused, base)


def refine_frame(model: Refiner, frame_t, frame_t1, warped) -> np.ndarray:
    """Refined frame given the two observed frames and the warped guess."""
    out = forward_tensor(model, frame_t, frame_t1, warped)
    return out.data.reshape(out.shape[2], out.shape[3]).copy()


def frame_refiner(model: Refiner):
    """Adapter for APIs that accept a ``(frame_t, frame_t1, warped) -> frame``
    callable (e.g. rollout)."""
    return lambda frame_t, frame_t1, warped: refine_frame(model, frame_t, frame_t1, warped)
