"""Portable checkpoint container.

Byte layout (all integers little-endian)::

    offset  size  field
    0       8     magic  b"HRLNCKPT"
    8       4     uint32 format version (1)
    12      8     uint64 header length H
    20      H     UTF-8 JSON header
    20+H    ...   array payload, each array contiguous little-endian

The JSON header holds ``{"meta": {...}, "arrays": [...]}`` where every array
entry is ``{"name", "shape", "dtype", "offset", "nbytes"}``.  ``dtype`` is one
of ``f32``, ``f64``, ``i64``; ``offset`` counts from the start of the payload.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

__all__ = ["MAGIC", "VERSION", "CheckpointError", "save_checkpoint", "load_checkpoint"]

MAGIC = b"HRLNCKPT"
VERSION = 1
_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8"), "i64": np.dtype("<i8")}
_CODES = {np.dtype(np.float32): "f32", np.dtype(np.float64): "f64", np.dtype(np.int64): "i64"}


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    """Write ``arrays`` and JSON-serialisable ``meta`` atomically to ``path``."""
    entries, blobs, offset = [], [], 0
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        if arr.dtype.kind in "iu":
            arr = arr.astype(np.int64)
        code = _CODES.get(arr.dtype)
        if code is None:
            raise CheckpointError(f"unsupported dtype {arr.dtype} for {name}")
        blob = np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "dtype": code, "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"meta": meta or {}, "arrays": entries}, sort_keys=True).encode()
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)
    os.replace(tmp, path)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    if len(raw) < 20:
        raise CheckpointError(f"{path}: truncated header")
    version, hlen = struct.unpack("<IQ", raw[8:20])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    try:
        header = json.loads(raw[20 : 20 + hlen])
        entries = header["arrays"]
        meta = header["meta"]
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from None
    payload = memoryview(raw)[20 + hlen :]
    arrays = {}
    for e in entries:
        dt = _DTYPES.get(e.get("dtype"))
        if dt is None:
            raise CheckpointError(f"{path}: unknown dtype {e.get('dtype')!r}")
        end = e["offset"] + e["nbytes"]
        if end > len(payload) or e["nbytes"] != dt.itemsize * int(np.prod(e["shape"], dtype=np.int64)):
            raise CheckpointError(f"{path}: array {e['name']!r} is truncated or malformed")
        buf = payload[e["offset"] : end]
        arrays[e["name"]] = np.frombuffer(buf, dtype=dt).reshape(e["shape"]).astype(dt.newbyteorder("="))
    return arrays, meta
