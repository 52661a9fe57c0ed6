"""
Eigenvector-based CSI: Gram matrices, dominant eigenvectors, subcarrier
grouping ("incorporation") and knowledge-driven augmentation by subgrouping.

All routines accept a batch of channel samples, ``H`` with shape
``(..., N_R, N_T, N_c)``, and return complex eigenvector matrices with
shape ``(..., N_T, columns)``.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ConvergenceWarning",
    "EigenResult",
    "gram",
    "dominant_eigenvector",
    "phase_normalize",
    "full_eigen_csi",
    "incorporate",
    "subgroup_eigenvectors",
    "kdda_augment",
    "kdda_default",
    "constant_selections",
]

POWER_TOL = 1e-12
POWER_MAX_ITER = 10_000
RESIDUAL_TOL = 1e-8
_PHASE_THRESHOLD = 1e-9


class ConvergenceWarning(RuntimeWarning):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass
class EigenResult:
    vector: np.ndarray
    value: np.ndarray
    residual: np.ndarray
    iterations: int


def gram(H: np.ndarray) -> np.ndarray:
    """``H^H H`` over the last two axes."""
    H = np.asarray(H)
    return np.swapaxes(H, -1, -2).conj() @ H


def phase_normalize(w: np.ndarray, axis: int = -1) -> np.ndarray:
    """Rotate each vector so its first entry with magnitude > 1e-9 is real positive."""
    w = np.moveaxis(np.asarray(w), axis, -1)
    mag = np.abs(w)
    first = np.argmax(mag > _PHASE_THRESHOLD, axis=-1)
    ref = np.take_along_axis(w, first[..., None], axis=-1)
    ref_mag = np.abs(ref)
    rot = np.where(ref_mag > 0, ref_mag / np.where(ref_mag > 0, ref, 1), 1)
    return np.moveaxis(w * rot, -1, axis)


def _residual(R, w, lam):
    rw = (R @ w[..., None])[..., 0]
    return np.linalg.norm(rw - lam[..., None] * w, axis=-1)


def dominant_eigenvector(R: np.ndarray, tol: float = POWER_TOL, max_iter: int = POWER_MAX_ITER,
                         return_info: bool = False):
    """Dominant eigenpair of Hermitian PSD matrices by power iteration.

    The iterate starts from ``(1, ..., 1)/sqrt(n)``. Each step applies the
    current iteration operator and then squares it, so step ``k`` applies
    ``R**(2**k)``: the convergence factor ``(lam2/lam1)**(2**k)`` shrinks
    doubly exponentially and near-degenerate spectra converge in a few dozen
    steps. Iteration stops once the Rayleigh quotient changes by less than
    ``tol * max(lam, 1)``, the iterate has stopped moving, the squared
    operator has collapsed onto the top eigenspace, and
    ``||R w - lam w|| <= 1e-8 * max(lam, 1)``.

    Parameters
    ----------
    R : array (..., n, n)
        Hermitian positive semidefinite, batched over leading axes.

    Returns
    -------
    w : array (..., n)
        Unit-norm, phase-normalized eigenvectors.
    lam : array (...)
        Largest eigenvalues.
    """
    R = np.asarray(R, dtype=np.complex128)
    if R.ndim < 2 or R.shape[-1] != R.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {R.shape}")
    n = R.shape[-1]
    batch = R.shape[:-2]
    R = R.reshape((-1, n, n))
    R = 0.5 * (R + np.swapaxes(R, -1, -2).conj())
    count = R.shape[0]

    scale = np.linalg.norm(R, axis=(-2, -1))
    M = R / np.where(scale > 0, scale, 1.0)[:, None, None]
    x = np.full((count, n), 1.0 / np.sqrt(n), dtype=np.complex128)
    lam = np.full(count, np.inf)
    done = np.zeros(count, dtype=bool)
    active = np.arange(count)
    it = 0
    for it in range(1, max_iter + 1):
        Ra, Ma, xa = R[active], M[active], x[active]
        y = (Ma @ xa[..., None])[..., 0]
        ynorm = np.linalg.norm(y, axis=-1)
        # an iterate (numerically) orthogonal to the dominant eigenspace: once M has
        # collapsed onto that eigenspace its strongest column is a valid restart
        lost = ynorm <= 1e-8 * np.linalg.norm(Ma, axis=(-2, -1))
        if np.any(lost):
            best = np.argmax(np.linalg.norm(Ma, axis=-2), axis=-1)
            col = np.take_along_axis(Ma, best[:, None, None], axis=-1)[..., 0]
            y = np.where(lost[:, None], col, y)
            ynorm = np.linalg.norm(y, axis=-1)
        x_new = np.where((ynorm > 0)[:, None], y / np.where(ynorm > 0, ynorm, 1.0)[:, None], xa)
        lam_new = np.real(np.einsum("bi,bij,bj->b", x_new.conj(), Ra, x_new))
        floor = np.maximum(np.abs(lam_new), 1.0)
        moved = 1.0 - np.abs(np.einsum("bi,bi->b", x_new.conj(), xa))
        residual = _residual(Ra, x_new, lam_new)
        M_next = Ma @ Ma
        M_next = 0.5 * (M_next + np.swapaxes(M_next, -1, -2).conj())
        mnorm = np.linalg.norm(M_next, axis=(-2, -1))
        M_next = M_next / np.where(mnorm > 0, mnorm, 1.0)[:, None, None]
        # the operator has collapsed onto the top eigenspace; without this an
        # iterate that is exactly another eigenvector would pass every other test
        collapsed = np.linalg.norm(M_next - Ma, axis=(-2, -1)) <= 1e-9
        conv = ((np.abs(lam_new - lam[active]) <= tol * floor)
                & (moved <= 1e-14)
                & (residual <= RESIDUAL_TOL * floor)
                & collapsed)
        x[active] = x_new
        lam[active] = lam_new
        M[active] = M_next
        done[active[conv]] = True
        active = active[~conv]
        if active.size == 0:
            break
    residual = _residual(R, x, lam)
    if not np.all(done):
        worst = float(np.max(residual[~done]))
        warnings.warn(ConvergenceWarning(
            f"power iteration hit the cap of {max_iter} steps, residual {worst:.3e}", worst), stacklevel=2)
    lam = np.maximum(lam, 0.0).reshape(batch)
    w = phase_normalize(x).reshape(batch + (n,))
    if return_info:
        return EigenResult(w, lam, residual.reshape(batch), it)
    return w, lam


def _check_columns(H):
    H = np.asarray(H)
    if H.ndim < 3:
        raise ValueError(f"expected channel with shape (..., N_R, N_T, N_c), got {H.shape}")
    return H


def _eigvecs_of(Rs: np.ndarray, what: str) -> np.ndarray:
    # Rs: (..., cols, N_T, N_T) -> (..., N_T, cols)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        info = dominant_eigenvector(Rs, return_info=True)
    if any(issubclass(c.category, ConvergenceWarning) for c in caught):
        idx = np.unravel_index(np.argmax(info.residual), info.residual.shape)
        worst = float(info.residual[idx])
        warnings.warn(ConvergenceWarning(
            f"{what} {idx[-1]}: power iteration did not converge (residual {worst:.3e})", worst),
            stacklevel=3)
    return np.swapaxes(info.vector, -1, -2)


def full_eigen_csi(H: np.ndarray) -> np.ndarray:
    """Per-subcarrier dominant eigenvectors ``W``, shape (..., N_T, N_c)."""
    H = _check_columns(H)
    return _eigvecs_of(_group_grams(H, 1), "subcarrier")


def _group_grams(H: np.ndarray, size: int) -> np.ndarray:
    # mean Gram matrix of consecutive blocks of `size` subcarriers -> (..., n_blocks, N_T, N_T)
    n_c = H.shape[-1]
    R = gram(np.moveaxis(H, -1, -3).astype(np.complex128))
    R = R.reshape(R.shape[:-3] + (n_c // size, size) + R.shape[-2:])
    return R.mean(axis=-3)


def incorporate(H: np.ndarray, n_gr: int) -> np.ndarray:
    """Group-incorporated CSI ``W_bar``, shape (..., N_T, N_c / n_gr).

    Column ``j`` is the dominant eigenvector of the mean Gram matrix of
    subcarriers ``j*n_gr .. (j+1)*n_gr - 1``.
    """
    H = _check_columns(H)
    n_c = H.shape[-1]
    if n_gr < 1 or n_c % n_gr:
        raise ValueError(f"group granularity {n_gr} must divide the number of subcarriers {n_c}")
    return _eigvecs_of(_group_grams(H, n_gr), "group")


def subgroup_eigenvectors(H: np.ndarray, n_gr: int, n_sgr: int) -> np.ndarray:
    """Dominant eigenvectors of every subgroup, shape (..., N_T, N_grp, N_sgrp)."""
    H = _check_columns(H)
    n_c = H.shape[-1]
    if n_gr < 1 or n_c % n_gr:
        raise ValueError(f"group granularity {n_gr} must divide the number of subcarriers {n_c}")
    if n_sgr < 1 or n_gr % n_sgr:
        raise ValueError(f"subgroup granularity {n_sgr} must divide the group granularity {n_gr}")
    w = _eigvecs_of(_group_grams(H, n_sgr), "subgroup")      # (..., N_T, N_c/n_sgr)
    return w.reshape(w.shape[:-1] + (n_c // n_gr, n_gr // n_sgr))


def constant_selections(n_sgrp: int, n_grp: int) -> list[np.ndarray]:
    """The selection vectors ``m = (k, ..., k)`` for k = 1..n_sgrp."""
    return [np.full(n_grp, k, dtype=int) for k in range(1, n_sgrp + 1)]


def kdda_augment(H: np.ndarray, n_gr: int, n_sgr: int, selections=None) -> np.ndarray:
    """Augmented CSI matrices assembled from subgroup eigenvectors.

    ``selections`` holds 1-based vectors ``m`` of length N_grp; column ``j`` of
    the result for ``m`` is the eigenvector of subgroup ``m[j]`` inside group
    ``j``. Defaults to the constant selections. Returns shape
    (..., len(selections), N_T, N_grp).
    """
    sub = subgroup_eigenvectors(H, n_gr, n_sgr)
    n_grp, n_sgrp = sub.shape[-2], sub.shape[-1]
    if selections is None:
        selections = constant_selections(n_sgrp, n_grp)
    sel = np.asarray(selections, dtype=int)
    if sel.ndim != 2 or sel.shape[1] != n_grp:
        raise ValueError(f"selections must have shape (k, {n_grp}), got {sel.shape}")
    if np.any(sel < 1) or np.any(sel > n_sgrp):
        bad = sel[(sel < 1) | (sel > n_sgrp)][0]
        raise IndexError(f"selection entry {bad} outside 1..{n_sgrp}")
    cols = np.arange(n_grp)
    out = sub[..., :, cols[None, :], sel - 1]             # (..., N_T, k, N_grp)
    return np.moveaxis(out, -2, -3)


def kdda_default(H: np.ndarray, n_gr: int = 16, n_sgrs=(1, 2, 4, 8)) -> np.ndarray:
    """Default augmentation recipe: constant selections for each subgroup size.

    Yields ``sum(n_gr // s for s in n_sgrs)`` matrices per sample (30 for the
    default arguments), stacked as (..., count, N_T, N_grp).
    """
    parts = [kdda_augment(H, n_gr, s) for s in n_sgrs]
    return np.concatenate(parts, axis=-3)


def max_selection_count(n_gr: int, n_sgr: int, n_grp: int) -> int:
    return (n_gr // n_sgr) ** n_grp


def all_selections(n_sgrp: int, n_grp: int):
    """Every selection vector (use only for tiny sizes: n_sgrp**n_grp items)."""
    for combo in itertools.product(range(1, n_sgrp + 1), repeat=n_grp):
        yield np.array(combo, dtype=int)
