"""Finite-difference gradient checking."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .core import Tensor, grad

__all__ = ["numerical_grad", "gradcheck"]


def numerical_grad(fn: Callable[[], Tensor], x: Tensor, eps: float = 1e-6) -> np.ndarray:
    """Central differences of scalar ``fn()`` with respect to ``x.data``."""
    out = np.zeros(x.shape, dtype=np.float64)
    flat = x.data.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = float(fn().data)
        flat[i] = orig - eps
        lo = float(fn().data)
        flat[i] = orig
        out.reshape(-1)[i] = (hi - lo) / (2 * eps)
    return out


def gradcheck(fn: Callable[[], Tensor], inputs: Sequence[Tensor], eps: float = 1e-6,
              rtol: float = 1e-4, atol: float = 1e-7, joint: bool = False) -> float:
    """Compare analytic and numerical gradients; return the worst relative error.

    Inputs must be float64 for meaningful results. Raises ``AssertionError``
    when any entry differs by more than ``atol + rtol * scale``.

    ``scale`` is the largest gradient magnitude of each input, or with
    ``joint`` the largest over all inputs together. The joint form suits
    whole networks, where some parameters have exactly zero gradient (for
    example attention key biases) and a per-tensor ratio would only measure
    finite-difference noise.
    """
    analytic = grad(fn(), list(inputs))
    pairs = [(x, np.asarray(ga.data, dtype=np.float64), numerical_grad(fn, x, eps))
             for x, ga in zip(inputs, analytic)]
    if joint:
        common = max(max(np.abs(ga).max(), np.abs(gn).max()) for _, ga, gn in pairs)
    worst = 0.0
    for x, ga, gn in pairs:
        scale = common if joint else max(np.abs(gn).max(), np.abs(ga).max())
        scale = max(scale, 1e-12)
        err = np.abs(ga - gn).max() / scale
        worst = max(worst, err)
        if np.abs(ga - gn).max() > atol + rtol * scale:
            raise AssertionError(f"gradient mismatch for input of shape {x.shape}: relative error {err:.3e}")
    return worst
