"""
Model checkpoint container.

Layout (little-endian)::

    b"IEFM"  u16 version  u32 config length  config JSON (UTF-8)
    u32 blob count
    per blob: u16 name length, name, u8 ndim, ndim * u32 shape, float32 data

Parameters, normalization statistics and power-iteration vectors are all
stored as named blobs.
"""
from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from .datafile import FormatError

__all__ = ["save_checkpoint", "load_checkpoint", "MAGIC", "VERSION"]

MAGIC = b"IEFM"
VERSION = 1


def save_checkpoint(path, config: dict, blobs: dict) -> Path:
    parts = [MAGIC, struct.pack("<H", VERSION)]
    cfg = json.dumps(config, sort_keys=True).encode()
    parts += [struct.pack("<I", len(cfg)), cfg, struct.pack("<I", len(blobs))]
    for name in sorted(blobs):
        arr = np.ascontiguousarray(blobs[name], dtype="<f4")
        key = name.encode()
        parts += [struct.pack("<H", len(key)), key, struct.pack("<B", arr.ndim),
                  struct.pack(f"<{arr.ndim}I", *arr.shape), arr.tobytes()]
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(b"".join(parts))
    os.replace(tmp, path)
    return path


def load_checkpoint(path) -> tuple[dict, dict]:
    buf = Path(path).read_bytes()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise FormatError(f"checkpoint truncated: needed {n} bytes, {len(buf) - pos} left", pos)
        out = buf[pos : pos + n]
        pos += n
        return out

    if take(4) != MAGIC:
        raise FormatError("bad magic", 0)
    (version,) = struct.unpack("<H", take(2))
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", 4)
    (n_cfg,) = struct.unpack("<I", take(4))
    config = json.loads(take(n_cfg).decode())
    (count,) = struct.unpack("<I", take(4))
    blobs = {}
    for _ in range(count):
        (n_name,) = struct.unpack("<H", take(2))
        name = take(n_name).decode()
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        size = int(np.prod(shape)) if ndim else 1
        blobs[name] = np.frombuffer(take(4 * size), dtype="<f4").reshape(shape).astype(np.float32)
    return config, blobs
