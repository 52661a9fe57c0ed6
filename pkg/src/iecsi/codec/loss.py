"""Generalized cosine similarity and the training loss built on it."""
from __future__ import annotations

import numpy as np

from ..tensor import Tensor
from ..tensor.core import mean, sum_

__all__ = ["gcs", "gcs_columns", "average_gcs", "codec_loss", "codec_loss_np"]


def gcs(w, w_hat) -> float:
    """``|w^H w_hat| / (||w|| ||w_hat||)`` for two complex vectors."""
    w, w_hat = np.ravel(w), np.ravel(w_hat)
    if w.shape != w_hat.shape:
        raise ValueError(f"length mismatch: {w.shape} vs {w_hat.shape}")
    nw, nh = np.linalg.norm(w), np.linalg.norm(w_hat)
    if nw == 0 or nh == 0:
        raise ValueError("generalized cosine similarity is undefined for a zero vector")
    return float(min(abs(np.vdot(w, w_hat)) / (nw * nh), 1.0))


def gcs_columns(W, W_hat) -> np.ndarray:
    """Per-column GCS of (..., N_T, N) complex matrices -> (..., N)."""
    W, W_hat = np.asarray(W), np.asarray(W_hat)
    if W.shape != W_hat.shape:
        raise ValueError(f"shape mismatch: {W.shape} vs {W_hat.shape}")
    num = np.abs(np.sum(W.conj() * W_hat, axis=-2))
    den = np.linalg.norm(W, axis=-2) * np.linalg.norm(W_hat, axis=-2)
    if np.any(den == 0):
        raise ValueError("generalized cosine similarity is undefined for a zero column")
    return np.minimum(num / den, 1.0)


def average_gcs(W, W_hat) -> np.ndarray:
    """Per-sample mean over columns of the GCS."""
    return gcs_columns(W, W_hat).mean(axis=-1)


def codec_loss_np(W, W_hat) -> float:
    """``1 - mean_i rho_i^2`` on complex matrices."""
    return float(1.0 - np.mean(gcs_columns(W, W_hat) ** 2))


def codec_loss(target: np.ndarray, pred: Tensor, eps: float = 1e-12) -> Tensor:
    """Differentiable ``1 - mean rho_i^2`` on real forms (B, 2 N_T, N).

    With ``w = a + jb`` and ``w_hat = c + jd``, ``|w^H w_hat|^2 =
    (sum ac + bd)^2 + (sum ad - bc)^2``.
    """
    n = target.shape[-2] // 2
    t = np.asarray(target, dtype=pred.dtype)
    a, b = Tensor._wrap(t[..., :n, :]), Tensor._wrap(t[..., n:, :])
    c, d = pred[..., :n, :], pred[..., n:, :]
    re = sum_(a * c + b * d, -2)
    im = sum_(a * d - b * c, -2)
    w2 = Tensor._wrap(np.sum(t * t, axis=-2))
    p2 = sum_(pred * pred, -2)
    rho2 = (re * re + im * im) / (w2 * p2 + eps)
    return 1.0 - mean(rho2)
