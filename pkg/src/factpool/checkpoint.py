"""Binary checkpoint container: header (config, seed, step) + named tensors.

Layout (all integers little-endian):
    magic b"FPCKPT01"
    u32 header length, header bytes (canonical JSON: config, seed, step, meta)
    u32 tensor count, then per tensor (sorted by name):
        u32 name length, name utf-8, u32 ndim, u64 x ndim shape,
        raw float64 little-endian data (C order)
Round-trips are exact: tensors are stored bit-for-bit.
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

from factpool.util import atomic_write_bytes, canonical_json

_MAGIC = b"FPCKPT01"


class CheckpointError(ValueError):
    pass


def checkpoint_bytes(
    params: dict[str, np.ndarray],
    config: dict,
    seed: int,
    step: int,
    meta: dict | None = None,
) -> bytes:
    header = canonical_json(
        {"config": config, "seed": seed, "step": step, "meta": meta or {}}
    ).encode("utf-8")
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<I", len(header)))
    buf.write(header)
    buf.write(struct.pack("<I", len(params)))
    for name in sorted(params):
        tensor = np.ascontiguousarray(params[name], dtype="<f8")
        encoded = name.encode("utf-8")
        buf.write(struct.pack("<I", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<I", tensor.ndim))
        for dim in tensor.shape:
            buf.write(struct.pack("<Q", dim))
        buf.write(tensor.tobytes())
    return buf.getvalue()


def save_checkpoint(
    path: str | Path,
    params: dict[str, np.ndarray],
    config: dict,
    seed: int,
    step: int,
    meta: dict | None = None,
) -> None:
    atomic_write_bytes(path, checkpoint_bytes(params, config, seed, step, meta))


def load_checkpoint(path: str | Path):
    """Returns (params dict, header dict)."""
    data = Path(path).read_bytes()
    view = memoryview(data)
    if view[:8].tobytes() != _MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    offset = 8
    (header_len,) = struct.unpack_from("<I", view, offset)
    offset += 4
    header = json.loads(view[offset : offset + header_len].tobytes().decode("utf-8"))
    offset += header_len
    (count,) = struct.unpack_from("<I", view, offset)
    offset += 4
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", view, offset)
        offset += 4
        name = view[offset : offset + name_len].tobytes().decode("utf-8")
        offset += name_len
        (ndim,) = struct.unpack_from("<I", view, offset)
        offset += 4
        shape = struct.unpack_from(f"<{ndim}Q", view, offset) if ndim else ()
        offset += 8 * ndim
        size = int(np.prod(shape)) if shape else 1
        tensor = np.frombuffer(view, dtype="<f8", count=size, offset=offset).reshape(shape)
        offset += 8 * size
        params[name] = tensor.copy()
    if offset != len(data):
        raise CheckpointError(f"{path}: trailing bytes after tensor block")
    return params, header
