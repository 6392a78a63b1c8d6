"""Single-file tensor checkpoint: a UTF-8 JSON manifest (names, shapes,
dtypes, byte offsets) followed by one contiguous little-endian raw blob.

Layout: magic ``NNCK``, uint32-LE manifest length, manifest JSON, blob.
Round-trips are bit-exact.
"""

import json
import os
import struct
import tempfile

import numpy as np

__all__ = ["save_tensors", "load_tensors", "CheckpointError"]

MAGIC = b"NNCK"

_DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}


class CheckpointError(ValueError):
    pass


def save_tensors(path, tensors, meta: dict | None = None) -> None:
    """Write named arrays plus a metadata dict; atomic on POSIX."""
    entries = []
    blobs = []
    offset = 0
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        if arr.dtype == np.float32:
            dt = "<f4"
        elif arr.dtype == np.float64:
            dt = "<f8"
        else:
            raise CheckpointError(f"unsupported dtype {arr.dtype} for tensor {name!r}")
        raw = np.ascontiguousarray(arr).astype(_DTYPES[dt], copy=False).tobytes()
        entries.append({
            "name": str(name),
            "dtype": dt,
            "shape": list(arr.shape),
            "offset": offset,
            "nbytes": len(raw),
        })
        blobs.append(raw)
        offset += len(raw)
    manifest = json.dumps({"version": 1, "meta": meta or {}, "tensors": entries},
                          ensure_ascii=False).encode("utf-8")

    path = os.fspath(path)
    dir_name = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=dir_name, prefix=".ckpt-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", len(manifest)))
            fh.write(manifest)
            for raw in blobs:
                fh.write(raw)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_tensors(path):
    """Read a checkpoint, returning ``(meta, {name: array})``."""
    with open(path, "rb") as fh:
        head = fh.read(8)
        if len(head) < 8 or head[:4] != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
        (mlen,) = struct.unpack("<I", head[4:8])
        manifest_raw = fh.read(mlen)
        if len(manifest_raw) != mlen:
            raise CheckpointError(f"{path}: truncated manifest")
        try:
            manifest = json.loads(manifest_raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: invalid manifest: {exc}") from exc
        blob = fh.read()

    tensors = {}
    for entry in manifest.get("tensors", []):
        dt = _DTYPES.get(entry["dtype"])
        if dt is None:
            raise CheckpointError(f"{path}: unknown dtype {entry['dtype']!r}")
        start, nbytes = entry["offset"], entry["nbytes"]
        if start + nbytes > len(blob):
            raise CheckpointError(f"{path}: truncated blob for tensor {entry['name']!r}")
        arr = np.frombuffer(blob[start:start + nbytes], dtype=dt).reshape(entry["shape"])
        tensors[entry["name"]] = arr.copy()
    return manifest.get("meta", {}), tensors
