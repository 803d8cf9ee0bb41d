"""Versioned binary checkpoint: named float64 arrays plus a JSON metadata blob.

Layout (all integers little-endian)::

    b"PVCK" | u32 version | u32 meta_len | meta (UTF-8 JSON)
    u32 n_arrays
    repeated: u16 name_len | name (UTF-8) | u8 ndim | u32 dims[ndim] | f64 data[prod(dims)]
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import PomeError
from .numkit import ParamSet

MAGIC = b"PVCK"
VERSION = 1


class CheckpointError(PomeError, ValueError):
    pass


def write_checkpoint(path, params, meta: dict | None = None) -> None:
    blob = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(blob)), blob, struct.pack("<I", len(params))]
    for name, value in params.items():
        arr = np.asarray(value, dtype="<f8", order="C")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)) + encoded)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_checkpoint(path) -> tuple[ParamSet, dict]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    pos = 4

    def take(fmt: str):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(data):
            raise CheckpointError(f"{path}: truncated checkpoint")
        out = struct.unpack_from(fmt, data, pos)
        pos += size
        return out

    def take_bytes(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise CheckpointError(f"{path}: truncated checkpoint")
        out = data[pos:pos + n]
        pos += n
        return out

    version, meta_len = take("<II")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    try:
        meta = json.loads(take_bytes(meta_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt metadata ({exc})") from exc
    (count,) = take("<I")
    params = ParamSet()
    for _ in range(count):
        (name_len,) = take("<H")
        try:
            name = take_bytes(name_len).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError(f"{path}: corrupt array name") from exc
        (ndim,) = take("<B")
        shape = take(f"<{ndim}I")
        n = int(np.prod(shape)) if ndim else 1
        values = take(f"<{n}d")
        params[name] = np.array(values, dtype=np.float64).reshape(shape)
    if pos != len(data):
        raise CheckpointError(f"{path}: trailing bytes after last array")
    return params, meta
