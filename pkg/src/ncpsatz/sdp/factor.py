"""Factorization of positive semidefinite matrices."""
from __future__ import annotations

import numpy as np


class IndefiniteError(ValueError):
    pass


def psd_factor(G, rank_tol: float = 1e-8, abs_tol: float = 0.0) -> np.ndarray:
    """Return ``F`` with ``G ~= F^* F`` and one row per retained eigenvalue.

    Eigenvalues below ``rank_tol * lambda_max`` (or ``abs_tol``) are
    treated as zero. Rows are ordered by decreasing eigenvalue and scaled
    so that the largest-modulus entry of each row is real and positive.
    """
    G = np.asarray(G)
    G = 0.5 * (G + G.conj().T)
    n = G.shape[0]
    if n == 0:
        return np.zeros((0, 0), dtype=G.dtype)
    w, U = np.linalg.eigh(G)
    top = max(float(w[-1]), 0.0)
    cut = max(rank_tol * top, abs_tol)
    if w[0] < -10.0 * cut and w[0] < -1e-300:
        raise IndefiniteError(f"matrix is indefinite: lambda_min={w[0]:.3e}, lambda_max={top:.3e}")
    keep = np.flatnonzero(w > cut)[::-1]
    F = np.sqrt(w[keep])[:, None] * U[:, keep].conj().T
    for i in range(F.shape[0]):
        j = int(np.argmax(np.abs(F[i])))
        if F[i, j] != 0:
            F[i] *= np.conj(F[i, j]) / abs(F[i, j])
    if not np.iscomplexobj(G):
        F = F.real
    return F
