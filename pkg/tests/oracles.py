"""Independent reference implementations used only by the tests."""
import math

import numpy as np


def jacobi_eigh(A, sweeps=100, tol=1e-15):
    """Cyclic Jacobi eigensolver for a real symmetric matrix.

    Returns eigenvalues (descending) and eigenvectors as columns.
    """
    A = np.array(A, dtype=np.float64)
    n = A.shape[0]
    V = np.eye(n)
    for _ in range(sweeps):
        off = np.sqrt(max(np.sum(A ** 2) - np.sum(np.diag(A) ** 2), 0.0))
        if off <= tol * max(np.linalg.norm(A), 1e-300):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(A[p, q]) < 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2 * A[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1))
                c = 1 / math.sqrt(t * t + 1)
                s = t * c
                J = np.eye(n)
                J[p, p] = J[q, q] = c
                J[p, q], J[q, p] = s, -s
                A = J.T @ A @ J
                V = V @ J
    vals = np.diag(A)
    order = np.argsort(vals)[::-1]
    return vals[order], V[:, order]


def hermitian_top_eigvec(R):
    """Dominant eigenpair of a Hermitian matrix through its real symmetric embedding.

    ``[[Re, -Im], [Im, Re]]`` has every eigenvalue of ``R`` twice; the top
    eigenvector ``[x; y]`` gives ``x + j y``.
    """
    n = R.shape[0]
    big = np.block([[R.real, -R.imag], [R.imag, R.real]])
    vals, vecs = jacobi_eigh(big)
    v = vecs[:, 0]
    w = v[:n] + 1j * v[n:]
    w /= np.linalg.norm(w)
    gap = (vals[0] - vals[2]) / max(abs(vals[0]), 1e-300)
    return w, vals[0], gap


def gelu_ref(x):
    return x * 0.5 * (1 + math.erf(x / math.sqrt(2)))


def conv2d_ref(x, k, stride, pad):
    """Direct-loop cross-correlation, x (C, H, W), k (O, C, kh, kw)."""
    c, h, w = x.shape
    o, _, kh, kw = k.shape
    xp = np.zeros((c, h + 2 * pad, w + 2 * pad))
    xp[:, pad:pad + h, pad:pad + w] = x
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    out = np.zeros((o, ho, wo))
    for oc in range(o):
        for i in range(ho):
            for j in range(wo):
                patch = xp[:, i * stride:i * stride + kh, j * stride:j * stride + kw]
                out[oc, i, j] = np.sum(patch * k[oc])
    return out


def channel_ref(gains, aod, aoa, delays, n_rx, n_tx, freqs):
    """Scalar-by-scalar path sum of the frequency response."""
    H = np.zeros((n_rx, n_tx, len(freqs)), dtype=complex)
    for i, f in enumerate(freqs):
        for p in range(len(gains)):
            for r in range(n_rx):
                ar = np.exp(-1j * np.pi * r * np.sin(aoa[p])) / np.sqrt(n_rx)
                for t in range(n_tx):
                    at = np.exp(-1j * np.pi * t * np.sin(aod[p])) / np.sqrt(n_tx)
                    H[r, t, i] += gains[p] * ar * np.conj(at) * np.exp(-2j * np.pi * f * delays[p])
    return H
