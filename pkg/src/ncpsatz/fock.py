"""Truncated Fock space: symmetrized creation operators and coefficient recovery.

The space has orthonormal basis ``e_w`` for words ``|w| <= depth``.
``C_j e_w = e_{x_j w}`` (zero when that word is too long) and
``A_j = C_j + C_j^T``. A polynomial ``q`` of degree ``<= depth`` is
uniquely determined by ``q(A)`` and can be read back from the column of
``q(A)`` belonging to the vacuum ``e_()``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .ncpoly import NCPoly, WordBasis, enumerate_words, evaluate, num_words

log = logging.getLogger(__name__)

DEFAULT_SIZE_CAP = 20_000


@dataclass(frozen=True)
class FockTuple:
    g: int
    depth: int
    A: tuple = field(repr=False)
    basis: WordBasis = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.basis)


@dataclass(frozen=True)
class ExtractionMatrix:
    """``M^T[v, w] = <A^w e_(), e_v>`` together with its inverse."""

    g: int
    depth: int
    M: np.ndarray = field(repr=False)
    M_inv: np.ndarray = field(repr=False)
    cond: float = float("nan")

    @property
    def coefficient_bound(self) -> float:
        """Constant ``c`` with ``max_w |Q_w| <= c |q(A)|``."""
        return float(np.linalg.norm(self.M_inv, 2) * self.M.shape[0])


def build_fock_tuple(g: int, depth: int, size_cap: int = DEFAULT_SIZE_CAP) -> FockTuple:
    """Symmetrized creation operators on words of length ``<= depth``."""
    if g < 1 or depth < 1:
        raise ValueError("need g >= 1 and depth >= 1")
    n = num_words(g, depth)
    if n > size_cap:
        raise ValueError(f"Fock space dimension {n} exceeds cap {size_cap}")
    basis = enumerate_words(g, depth)
    A = []
    for j in range(1, g + 1):
        C = np.zeros((n, n))
        for w, col in basis.index.items():
            if len(w) < depth:
                C[basis.index[(j,) + w], col] = 1.0
        A.append(C + C.T)
    return FockTuple(g, depth, tuple(A), basis)


def vacuum_orbit(f: FockTuple) -> np.ndarray:
    """Columns ``A^w e_()`` for all basis words ``w`` (this is ``M^T``)."""
    n = f.dim
    out = np.zeros((n, n))
    out[0, 0] = 1.0
    for w, col in f.basis.index.items():
        if not w:
            continue
        # A^w e = A_{w_1} A^{w'} e with w = x_{w_1} w'
        out[:, col] = f.A[w[0] - 1] @ out[:, f.basis.index[w[1:]]]
    return out


def extraction_matrix(f: FockTuple) -> ExtractionMatrix:
    MT = vacuum_orbit(f)
    M = MT.T.copy()
    try:
        M_inv = np.linalg.inv(M)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("extraction matrix is singular; Fock construction is broken") from exc
    if np.max(np.abs(M @ M_inv - np.eye(f.dim))) > 1e-10:
        raise RuntimeError("extraction matrix inverse failed the identity check")
    cond = float(np.linalg.cond(M))
    log.info("extraction matrix g=%d depth=%d cond=%.3e", f.g, f.depth, cond)
    return ExtractionMatrix(f.g, f.depth, M, M_inv, cond)


def vacuum_blocks(T, f: FockTuple, nu: int) -> np.ndarray:
    """Stack of ``nu x nu`` blocks ``Z_v = T[(., v), (., ())]`` as a ``(N, nu, nu)`` array."""
    n = f.dim
    T = np.asarray(T)
    if T.shape != (nu * n, nu * n):
        raise ValueError(f"expected a {nu * n}x{nu * n} matrix")
    # index (a, v) -> a * n + v with the coefficient as the outer factor
    T4 = T.reshape(nu, n, nu, n)
    return np.transpose(T4[:, :, :, 0], (1, 0, 2))


def extract_coefficients(T, f: FockTuple, nu: int = 1, em: ExtractionMatrix | None = None,
                         check: bool = True, prune: float = 0.0) -> NCPoly:
    """Recover ``q`` from ``T = q(A)`` through ``Q = Z M^{-1}``."""
    em = em or extraction_matrix(f)
    Z = vacuum_blocks(T, f, nu)
    Q = np.einsum("vab,vw->wab", Z, em.M_inv)
    q = NCPoly(f.g, {w: Q[i] for i, w in enumerate(f.basis.words)}, (nu, nu))
    if prune:
        q = q.prune(prune)
    if check:
        err = np.max(np.abs(evaluate(q, f.A) - T)) if q.terms else np.max(np.abs(T))
        if err > 1e-6 * max(1.0, np.max(np.abs(T))):
            raise ValueError(f"input not a degree-{f.depth} polynomial image (error {err:.2e})")
    return q


def scale_for_pencil(L, f: FockTuple, floor: float = 2.0**-40) -> float:
    """Largest ``t`` in ``1, 1/2, 1/4, ...`` with ``L(tA) >= I/2``."""
    if not L.is_monic:
        raise ValueError("pencil must be monic")
    t = 1.0
    while t >= floor:
        if np.linalg.eigvalsh(L.evaluate([t * a for a in f.A]))[0] >= 0.5:
            return t
        t /= 2
    raise ValueError("no admissible scaling above the floor")


def extraction_report(g: int, depth: int) -> dict:
    """JSON-friendly dump of the extraction matrix and its condition number."""
    em = extraction_matrix(build_fock_tuple(g, depth))
    return {"g": g, "depth": depth, "cond": em.cond, "M": em.M.tolist(),
            "coefficient_bound": em.coefficient_bound}
