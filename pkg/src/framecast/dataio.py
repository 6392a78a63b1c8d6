"""Frame ingestion, on-disk formats, synthetic sequences, dataset
windowing, and augmentation.

Formats:
  pgm16   binary P5, 16-bit big-endian samples, maxval-normalized to [0, 1]
  rawf32  little-endian float32 grid with a ``<path>.json`` sidecar holding
          {"width": W, "height": H} and an optional {"normalize": {"min", "max"}}
  flow    4-byte magic "PIEH", int32-LE width/height, interleaved (u, v)
          float32 pairs row-major
"""

import json
import math
import os
import tempfile
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .grid import as_field, as_flow, as_frame, sample_bilinear

__all__ = [
    "FormatError",
    "FrameSequence",
    "SyntheticSpec",
    "Triplet",
    "atomic_write_bytes",
    "load_frame",
    "save_frame",
    "load_flow",
    "save_flow",
    "generate_synthetic",
    "make_triplets",
    "augment",
    "augment_fields",
    "load_manifest",
    "save_manifest",
]

FLOW_MAGIC = b"PIEH"
FRAME_FORMATS = ("pgm16", "rawf32")


class FormatError(ValueError):
    """Malformed file; ``offset`` is the approximate byte position."""

    def __init__(self, message, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


@dataclass
class FrameSequence:
    frames: list
    cadence_minutes: float
    source_id: str = ""

    def __post_init__(self):
        if len(self.frames) < 2:
            raise ValueError(f"sequence needs >= 2 frames, got {len(self.frames)}")
        if self.cadence_minutes <= 0:
            raise ValueError(f"cadence must be > 0 minutes, got {self.cadence_minutes}")
        self.frames = [as_frame(f) for f in self.frames]
        shape = self.frames[0].shape
        for i, f in enumerate(self.frames):
            if f.shape != shape:
                raise ValueError(f"frame {i} has dims {f.shape}, expected {shape}")


@dataclass(frozen=True)
class SyntheticSpec:
    """Deterministic moving-texture sequence description."""

    width: int = 64
    height: int = 64
    velocity: tuple = (2.0, 0.0)
    texture: str = "bandlimited-noise"
    brightness_drift: float = 0.0
    growth_rate: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if self.width < 2 or self.height < 2:
            raise ValueError(f"grid must be at least 2x2, got {(self.width, self.height)}")
        if self.texture not in ("bandlimited-noise", "gaussian-blobs", "advected-fractal"):
            raise ValueError(f"unknown texture {self.texture!r}")
        if not all(np.isfinite(self.velocity)) or len(self.velocity) != 2:
            raise ValueError(f"velocity must be a finite (vx, vy) pair, got {self.velocity}")


class Triplet(NamedTuple):
    """Two input frames plus the held-out prediction target."""

    first: np.ndarray
    second: np.ndarray
    target: np.ndarray


# ---------------------------------------------------------------------------
# frame formats


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temp file in the same directory plus atomic rename, so
    failures leave no partial output."""
    path = os.fspath(path)
    dir_name = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=dir_name, prefix=".fc-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _parse_pgm_tokens(raw: bytes, n_tokens: int):
    """Read whitespace/comment-separated header tokens, returning them with
    the offset of the first binary byte."""
    tokens = []
    pos = 0
    while len(tokens) < n_tokens:
        if pos >= len(raw):
            raise FormatError("truncated PGM header", offset=pos)
        ch = raw[pos:pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            while pos < len(raw) and raw[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        else:
            start = pos
            while pos < len(raw) and not raw[pos:pos + 1].isspace():
                pos += 1
            tokens.append((raw[start:pos], start))
    if pos >= len(raw) or not raw[pos:pos + 1].isspace():
        raise FormatError("missing whitespace after PGM maxval", offset=pos)
    return tokens, pos + 1


def _load_pgm16(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (expected 'P5')", offset=0)
    (magic, width_tok, height_tok, maxval_tok), data_start = _parse_pgm_tokens(raw, 4)
    try:
        width, height, maxval = int(width_tok[0]), int(height_tok[0]), int(maxval_tok[0])
    except ValueError:
        raise FormatError(f"{path}: non-numeric PGM header field", offset=width_tok[1]) from None
    if width < 2 or height < 2:
        raise FormatError(f"{path}: dims {width}x{height} below 2x2 minimum", offset=width_tok[1])
    if not 0 < maxval < 65536:
        raise FormatError(f"{path}: maxval {maxval} out of range", offset=maxval_tok[1])
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    expected = width * height * dtype.itemsize
    data = raw[data_start:data_start + expected]
    if len(data) != expected:
        raise FormatError(
            f"{path}: expected {expected} sample bytes, found {len(data)}",
            offset=data_start + len(data),
        )
    samples = np.frombuffer(data, dtype=dtype).reshape(height, width)
    return (samples.astype(np.float32) / np.float32(maxval)).clip(0.0, 1.0)


def _save_pgm16(path, frame) -> None:
    f = as_frame(frame)
    h, w = f.shape
    samples = np.round(f.astype(np.float64) * 65535.0).astype(">u2")
    atomic_write_bytes(path, b"P5\n%d %d\n65535\n" % (w, h) + samples.tobytes())


def _sidecar_path(path) -> str:
    return os.fspath(path) + ".json"


def _load_rawf32(path) -> np.ndarray:
    sidecar = _sidecar_path(path)
    try:
        with open(sidecar, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        raise FormatError(f"{path}: missing sidecar {sidecar}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{sidecar}: invalid JSON: {exc}") from None
    try:
        width, height = int(meta["width"]), int(meta["height"])
    except (KeyError, TypeError, ValueError):
        raise FormatError(f"{sidecar}: sidecar must define integer width/height") from None
    with open(path, "rb") as fh:
        raw = fh.read()
    expected = width * height * 4
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(raw)}", offset=len(raw))
    values = np.frombuffer(raw, dtype="<f4").reshape(height, width).astype(np.float32)
    norm = meta.get("normalize")
    if norm is not None:
        lo, hi = float(norm["min"]), float(norm["max"])
        if not hi > lo:
            raise FormatError(f"{sidecar}: normalize.max must exceed normalize.min")
        values = (values - lo) / (hi - lo)
    if not np.isfinite(values).all():
        raise FormatError(f"{path}: non-finite sample values")
    return as_field(np.clip(values, 0.0, 1.0))


def _save_rawf32(path, frame) -> None:
    f = as_frame(frame)
    h, w = f.shape
    atomic_write_bytes(path, f.astype("<f4").tobytes())
    sidecar = json.dumps({"width": w, "height": h}).encode("utf-8")
    atomic_write_bytes(_sidecar_path(path), sidecar)


def load_frame(path, fmt: str) -> np.ndarray:
    """Load a [0, 1] gray-scale frame in the given format."""
    if fmt == "pgm16":
        return _load_pgm16(path)
    if fmt == "rawf32":
        return _load_rawf32(path)
    raise ValueError(f"unknown frame format {fmt!r}; expected one of {FRAME_FORMATS}")


def save_frame(path, frame, fmt: str) -> None:
    if fmt == "pgm16":
        _save_pgm16(path, frame)
    elif fmt == "rawf32":
        _save_rawf32(path, frame)
    else:
        raise ValueError(f"unknown frame format {fmt!r}; expected one of {FRAME_FORMATS}")


# ---------------------------------------------------------------------------
# flow format


def save_flow(flow, path) -> None:
    f = as_flow(flow)
    h, w = f.shape[:2]
    header = FLOW_MAGIC + np.array([w, h], dtype="<i4").tobytes()
    atomic_write_bytes(path, header + f.astype("<f4").tobytes())


def load_flow(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != FLOW_MAGIC:
        raise FormatError(f"{path}: bad flow magic {raw[:4]!r}", offset=0)
    if len(raw) < 12:
        raise FormatError(f"{path}: truncated flow header", offset=len(raw))
    w, h = np.frombuffer(raw[4:12], dtype="<i4")
    expected = 12 + int(w) * int(h) * 8
    if w < 1 or h < 1 or len(raw) != expected:
        raise FormatError(
            f"{path}: expected {expected} bytes for {w}x{h} flow, found {len(raw)}",
            offset=len(raw),
        )
    return np.frombuffer(raw[12:], dtype="<f4").reshape(int(h), int(w), 2).copy()


# ---------------------------------------------------------------------------
# synthetic sequences


def _bandlimited_noise(rng, h, w, cutoff=0.08, lo=0.12, hi=0.82):
    spectrum = np.fft.rfft2(rng.standard_normal((h, w)))
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.rfftfreq(w)[None, :]
    spectrum *= np.exp(-(fx**2 + fy**2) / (2.0 * cutoff**2))
    img = np.fft.irfft2(spectrum, s=(h, w))
    img -= img.min()
    peak = img.max()
    if peak > 0:
        img /= peak
    return (lo + (hi - lo) * img).astype(np.float32)


def _fractal_noise(rng, h, w, beta=1.8, lo=0.12, hi=0.82):
    spectrum = np.fft.rfft2(rng.standard_normal((h, w)))
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.rfftfreq(w)[None, :]
    radius = np.sqrt(fx**2 + fy**2)
    radius[0, 0] = 1.0
    spectrum *= radius ** (-beta)
    spectrum[0, 0] = 0.0
    img = np.fft.irfft2(spectrum, s=(h, w))
    img -= img.min()
    peak = img.max()
    if peak > 0:
        img /= peak
    return (lo + (hi - lo) * img).astype(np.float32)


def _shift_periodic(img, dx, dy):
    """Bilinear shift with periodic wrap: out(x) = img(x - d), exact for
    integer displacements."""
    ix, fx = int(math.floor(dx)), dx - math.floor(dx)
    iy, fy = int(math.floor(dy)), dy - math.floor(dy)
    base = np.roll(img, (iy, ix), axis=(0, 1))
    if fx == 0.0 and fy == 0.0:
        return base
    right = np.roll(base, 1, axis=1)
    down = np.roll(base, 1, axis=0)
    down_right = np.roll(right, 1, axis=0)
    fx32, fy32 = np.float32(fx), np.float32(fy)
    top = base * (1 - fx32) + right * fx32
    bottom = down * (1 - fx32) + down_right * fx32
    return top * (1 - fy32) + bottom * fy32


def _shift_replicate(img, dx, dy):
    h, w = img.shape
    X, Y = np.meshgrid(np.arange(w, dtype=np.float32), np.arange(h, dtype=np.float32))
    return sample_bilinear(img, X - np.float32(dx), Y - np.float32(dy))


def _blob_params(rng, h, w, n_blobs=6):
    cx = rng.uniform(0.15 * w, 0.85 * w, n_blobs)
    cy = rng.uniform(0.15 * h, 0.85 * h, n_blobs)
    radius = rng.uniform(0.06 * min(h, w), 0.16 * min(h, w), n_blobs)
    amp = rng.uniform(0.25, 0.55, n_blobs)
    return cx, cy, radius, amp


def _draw_blobs(h, w, cx, cy, radius, amp):
    X, Y = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    img = np.full((h, w), 0.08, dtype=np.float64)
    for x0, y0, r, a in zip(cx, cy, radius, amp):
        img += a * np.exp(-((X - x0) ** 2 + (Y - y0) ** 2) / (2.0 * r * r))
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def generate_synthetic(spec: SyntheticSpec, n_frames: int,
                       cadence_minutes: float = 10.0) -> FrameSequence:
    """Frame k is the base texture advected by k * velocity, brightened by
    k * brightness_drift, with blob radii grown by (1 + growth_rate)^k.
    Fully determined by the spec's seed."""
    spec.validate()
    if n_frames < 2:
        raise ValueError(f"n_frames must be >= 2, got {n_frames}")
    rng = np.random.default_rng(spec.seed)
    h, w = spec.height, spec.width
    vx, vy = float(spec.velocity[0]), float(spec.velocity[1])

    frames = []
    if spec.texture == "gaussian-blobs":
        cx, cy, radius, amp = _blob_params(rng, h, w)
        for k in range(n_frames):
            grown = radius * (1.0 + spec.growth_rate) ** k
            img = _draw_blobs(h, w, cx + k * vx, cy + k * vy, grown, amp)
            frames.append(np.clip(img + np.float32(k * spec.brightness_drift), 0.0, 1.0))
    else:
        if spec.texture == "bandlimited-noise":
            base = _bandlimited_noise(rng, h, w)
            shift = _shift_periodic
        else:
            base = _fractal_noise(rng, h, w)
            shift = _shift_replicate
        for k in range(n_frames):
            img = shift(base, k * vx, k * vy)
            frames.append(np.clip(img + np.float32(k * spec.brightness_drift), 0.0, 1.0))
    return FrameSequence(frames, cadence_minutes, source_id=f"synthetic:{spec.texture}:{spec.seed}")


# ---------------------------------------------------------------------------
# dataset windowing + augmentation


def make_triplets(seq: FrameSequence, stride: int = 1, mode: str = "interp") -> list:
    """Interpolation mode pairs frames two steps apart with the held-out
    middle frame as target; future mode targets the frame after the pair."""
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    frames = seq.frames
    if len(frames) < 3:
        raise ValueError(f"need >= 3 frames to build triplets, got {len(frames)}")
    triplets = []
    if mode == "interp":
        for i in range(0, len(frames) - 2, stride):
            triplets.append(Triplet(frames[i], frames[i + 2], frames[i + 1]))
    elif mode == "future":
        for i in range(0, len(frames) - 2, stride):
            triplets.append(Triplet(frames[i], frames[i + 1], frames[i + 2]))
    else:
        raise ValueError(f"unknown triplet mode {mode!r}; expected 'interp' or 'future'")
    return triplets


def augment_fields(fields, rng, crop_hw, rotate: bool = True) -> list:
    """One crop window and one 90-degree rotation drawn per call and applied
    identically to every field."""
    fields = [as_field(f) for f in fields]
    h, w = fields[0].shape
    for f in fields[1:]:
        if f.shape != (h, w):
            raise ValueError(f"augmented fields must share dims, got {(h, w)} vs {f.shape}")
    ch, cw = int(crop_hw[0]), int(crop_hw[1])
    if ch > h or cw > w:
        raise ValueError(f"crop {(ch, cw)} larger than frame {(h, w)}")
    if rotate and ch != cw:
        raise ValueError(f"90-degree rotation requires a square crop, got {(ch, cw)}")
    top = int(rng.integers(0, h - ch + 1))
    left = int(rng.integers(0, w - cw + 1))
    k = int(rng.integers(0, 4)) if rotate else 0
    out = []
    for f in fields:
        window = f[top:top + ch, left:left + cw]
        out.append(np.ascontiguousarray(np.rot90(window, k)))
    return out


def augment(triplet: Triplet, rng, crop_hw, rotate: bool = True) -> Triplet:
    return Triplet(*augment_fields(list(triplet), rng, crop_hw, rotate=rotate))


# ---------------------------------------------------------------------------
# manifests


def save_manifest(directory, seq: FrameSequence, fmt: str = "rawf32",
                  prefix: str = "frame") -> str:
    """Write every frame plus a JSON manifest; returns the manifest path."""
    directory = os.fspath(directory)
    os.makedirs(directory, exist_ok=True)
    ext = "pgm" if fmt == "pgm16" else "raw"
    names = []
    for i, frame in enumerate(seq.frames):
        name = f"{prefix}_{i:04d}.{ext}"
        save_frame(os.path.join(directory, name), frame, fmt)
        names.append(name)
    manifest = {
        "version": 1,
        "cadence_minutes": seq.cadence_minutes,
        "format": fmt,
        "source_id": seq.source_id,
        "frames": names,
    }
    path = os.path.join(directory, "manifest.json")
    atomic_write_bytes(path, json.dumps(manifest, indent=2).encode("utf-8"))
    return path


def load_manifest(path) -> FrameSequence:
    path = os.fspath(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from None
    for key in ("cadence_minutes", "format", "frames"):
        if key not in manifest:
            raise FormatError(f"{path}: manifest missing key {key!r}")
    fmt = manifest["format"]
    if fmt not in FRAME_FORMATS:
        raise FormatError(f"{path}: unknown frame format {fmt!r}")
    base = os.path.dirname(path)
    frames = [load_frame(os.path.join(base, name), fmt) for name in manifest["frames"]]
    return FrameSequence(frames, float(manifest["cadence_minutes"]),
                         source_id=str(manifest.get("source_id", "")))
