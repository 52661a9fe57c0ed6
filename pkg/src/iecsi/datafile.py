"""
Binary container for channel and eigenvector-CSI datasets.

Layout (all little-endian)::

    offset  size  field
    0       4     magic b"CSIB"
    4       2     format version (1)
    6       2     flags: bit 0 synthetic origin, bit 1 eigenvector CSI
    8       4     n_rx
    12      4     n_tx
    16      4     n_c (subcarriers, or groups for incorporated CSI)
    20      4     sample count
    24      8     seed
    32      ...   payload, float32 (re, im) pairs, sample-major, C order

Eigenvector matrices of shape (N_T, N) are stored with ``n_rx = 1``.
"""
from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "MAGIC",
    "VERSION",
    "FLAG_SYNTHETIC",
    "FLAG_EIGEN",
    "HEADER",
    "FormatError",
    "DatasetFile",
    "write_dataset",
    "read_dataset",
    "iter_samples",
    "sha256",
]

MAGIC = b"CSIB"
VERSION = 1
FLAG_SYNTHETIC = 1
FLAG_EIGEN = 2
HEADER = struct.Struct("<4sHHIIIIQ")


class FormatError(ValueError):
    """Malformed dataset file; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


@dataclass
class DatasetFile:
    """In-memory dataset: ``data`` has shape (count, n_rx, n_tx, n_c), complex64."""

    data: np.ndarray
    seed: int = 0
    flags: int = 0

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 3:
            # (count, N_T, N) eigenvector matrices
            data = data[:, None]
            self.flags |= FLAG_EIGEN
        if data.ndim != 4:
            raise ValueError(f"expected (count, n_rx, n_tx, n_c) array, got shape {data.shape}")
        self.data = data.astype(np.complex64, copy=False)

    @property
    def count(self) -> int:
        return self.data.shape[0]

    @property
    def synthetic(self) -> bool:
        return bool(self.flags & FLAG_SYNTHETIC)

    @property
    def is_eigen(self) -> bool:
        return bool(self.flags & FLAG_EIGEN)

    def matrices(self) -> np.ndarray:
        """Data with the unit receive axis dropped for eigenvector CSI."""
        return self.data[:, 0] if self.is_eigen else self.data

    def header_bytes(self) -> bytes:
        _, n_rx, n_tx, n_c = self.data.shape
        return HEADER.pack(MAGIC, VERSION, self.flags, n_rx, n_tx, n_c, self.count, self.seed)

    def to_bytes(self) -> bytes:
        payload = np.ascontiguousarray(self.data).view(np.float32).astype("<f4", copy=False)
        return self.header_bytes() + payload.tobytes()


def write_dataset(path, ds: DatasetFile) -> Path:
    """Write atomically (temp file + rename) so readers never see partial files."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(ds.to_bytes())
    os.replace(tmp, path)
    return path


def _parse_header(buf: bytes):
    if len(buf) < HEADER.size:
        raise FormatError(f"truncated header: expected {HEADER.size} bytes, got {len(buf)}", len(buf))
    magic, version, flags, n_rx, n_tx, n_c, count, seed = HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    for off, (name, v) in zip((8, 12, 16), (("n_rx", n_rx), ("n_tx", n_tx), ("n_c", n_c))):
        if v < 1:
            raise FormatError(f"invalid dimension {name}={v}", off)
    return flags, n_rx, n_tx, n_c, count, seed


def read_dataset(path) -> DatasetFile:
    buf = Path(path).read_bytes()
    flags, n_rx, n_tx, n_c, count, seed = _parse_header(buf)
    expected = count * n_rx * n_tx * n_c * 8
    actual = len(buf) - HEADER.size
    if actual != expected:
        raise FormatError(f"truncated payload: expected {expected} bytes, got {actual}",
                          HEADER.size + min(actual, expected))
    data = np.frombuffer(buf, dtype="<f4", offset=HEADER.size).astype(np.float32)
    data = data.view(np.complex64).reshape(count, n_rx, n_tx, n_c)
    ds = DatasetFile.__new__(DatasetFile)
    ds.data, ds.seed, ds.flags = data, seed, flags
    return ds


def iter_samples(path):
    """Yield one (n_rx, n_tx, n_c) sample at a time without loading the whole file."""
    with open(path, "rb") as fh:
        flags, n_rx, n_tx, n_c, count, _ = _parse_header(fh.read(HEADER.size))
        size = n_rx * n_tx * n_c * 8
        for i in range(count):
            chunk = fh.read(size)
            if len(chunk) != size:
                raise FormatError(f"truncated payload: expected {count * size} bytes, "
                                  f"got {i * size + len(chunk)}", HEADER.size + i * size + len(chunk))
            yield np.frombuffer(chunk, dtype="<f4").view(np.complex64).reshape(n_rx, n_tx, n_c)


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()
