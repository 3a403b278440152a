"""Batched Hermitian helpers.

Spectral evaluations run at every grid node, so the 2x2 case (complex
dimension two, the main production case) uses closed forms instead of the
general LAPACK loop.
"""

from __future__ import annotations

import numpy as np


def herm(A):
    """Hermitian part ``(A + A^H) / 2`` over the last two axes."""
    return 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))


def ctranspose(A):
    return np.conj(np.swapaxes(A, -1, -2))


def _eigh2(B):
    a = B[..., 0, 0].real
    d = B[..., 1, 1].real
    b = 0.5 * (B[..., 0, 1] + np.conj(B[..., 1, 0]))
    m = 0.5 * (a + d)
    r = np.hypot(0.5 * (a - d), np.abs(b))
    w = np.stack([m - r, m + r], axis=-1)
    # eigenvector of the smaller eigenvalue: pick the better conditioned form
    v1 = np.stack([b, (m - r) - a], axis=-1)
    v2 = np.stack([(m - r) - d, np.conj(b)], axis=-1)
    n1 = np.sum(np.abs(v1) ** 2, axis=-1)
    n2 = np.sum(np.abs(v2) ** 2, axis=-1)
    v = np.where((n1 >= n2)[..., None], v1, v2)
    nv = np.sqrt(np.maximum(n1, n2))
    tiny = nv <= 1e-300
    nv = np.where(tiny, 1.0, nv)
    v = v / nv[..., None]
    v[tiny] = np.array([1.0, 0.0])
    U = np.empty(B.shape, dtype=complex)
    U[..., :, 0] = v
    U[..., 0, 1] = -np.conj(v[..., 1])
    U[..., 1, 1] = np.conj(v[..., 0])
    return w, U


def eigh(B):
    """Ascending eigenvalues and unitary eigenvectors of Hermitian ``B``."""
    B = np.asarray(B)
    if B.shape[-1] == 2:
        return _eigh2(B)
    return np.linalg.eigh(B)


def eigvalsh(B):
    B = np.asarray(B)
    if B.shape[-1] == 2:
        a = B[..., 0, 0].real
        d = B[..., 1, 1].real
        b = 0.5 * (B[..., 0, 1] + np.conj(B[..., 1, 0]))
        m = 0.5 * (a + d)
        r = np.hypot(0.5 * (a - d), np.abs(b))
        return np.stack([m - r, m + r], axis=-1)
    return np.linalg.eigvalsh(B)


def inv_cholesky(G):
    """``Linv`` with ``G = L L^H`` so that ``Linv G Linv^H = I``."""
    L = np.linalg.cholesky(G)
    n = G.shape[-1]
    return np.linalg.solve(L, np.broadcast_to(np.eye(n), G.shape))


def trace_product(A, B):
    """``tr(A B)`` over the last two axes."""
    return np.einsum("...ij,...ji->...", A, B)
