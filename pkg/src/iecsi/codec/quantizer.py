"""Uniform scalar quantizer and bit packing for the feedback vector."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..tensor import Tensor

__all__ = ["BitStream", "quantize_indices", "dequantize_indices", "quantize", "dequantize",
           "straight_through"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BitStream:
    """Exactly ``n_bits`` feedback bits, packed MSB-first into bytes."""

    packed: bytes
    n_bits: int
    q: int

    def __post_init__(self):
        if len(self.packed) != -(-self.n_bits // 8):
            raise ValueError(f"{len(self.packed)} bytes cannot hold exactly {self.n_bits} bits")

    def __len__(self):
        return self.n_bits

    def bits(self) -> np.ndarray:
        return np.unpackbits(np.frombuffer(self.packed, dtype=np.uint8))[: self.n_bits]

    def indices(self) -> np.ndarray:
        """Unpack the q-bit fields (big-endian within each field)."""
        fields = self.bits().reshape(-1, self.q).astype(np.int64)
        weights = 1 << np.arange(self.q - 1, -1, -1)
        return fields @ weights


def quantize_indices(v, q: int) -> np.ndarray:
    """``clamp(floor(v * 2^q), 0, 2^q - 1)``; out-of-range input is clamped."""
    v = np.asarray(v, dtype=np.float64)
    if q < 1:
        raise ValueError("q must be >= 1")
    if np.any((v < 0) | (v > 1)):
        log.debug("quantizer input outside [0, 1] clamped")
    levels = 1 << q
    return np.clip(np.floor(v * levels), 0, levels - 1).astype(np.int64)


def dequantize_indices(idx, q: int) -> np.ndarray:
    """Cell midpoints ``(idx + 0.5) / 2^q``."""
    return (np.asarray(idx, dtype=np.float64) + 0.5) / (1 << q)


def quantize(v, q: int) -> BitStream:
    """Quantize a vector of ``L_q`` values into a ``L_q * q`` bit stream."""
    idx = quantize_indices(np.ravel(v), q)
    shifts = np.arange(q - 1, -1, -1)
    bits = ((idx[:, None] >> shifts) & 1).astype(np.uint8).ravel()
    return BitStream(np.packbits(bits).tobytes(), bits.size, q)


def dequantize(stream: BitStream) -> np.ndarray:
    return dequantize_indices(stream.indices(), stream.q)


def straight_through(v: Tensor, q: int) -> Tensor:
    """Quantize-dequantize in the forward pass, identity in the backward pass."""
    vq = dequantize_indices(quantize_indices(v.data, q), q).astype(v.dtype)
    return v + Tensor._wrap(vq - v.data)
