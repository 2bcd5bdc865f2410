"""Block semidefinite programs in standard equality form.

Primal:  minimize <C, X>  subject to  <A_i, X> = b_i,  X = diag(X_1..X_K) >= 0
Dual:    maximize b^T y   subject to  C - sum_i y_i A_i = Z >= 0

``<A, X> = Re tr(A^* X)``. Constraint data is stored per block as a sparse
``m x n_k^2`` matrix whose row ``i`` is the row-major vectorization of the
hermitian matrix ``A_i`` restricted to block ``k``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


def _transpose_perm(n: int) -> np.ndarray:
    """Index map sending vec position (r, c) to (c, r)."""
    return np.arange(n * n).reshape(n, n).T.ravel()


@dataclass
class SdpProblem:
    """Equality-form SDP over hermitian PSD blocks.

    Parameters
    ----------
    block_sizes : sequence of int
    A : sequence of sparse matrices
        ``A[k]`` has shape ``(m, n_k**2)``.
    b : array of shape (m,)
    C : sequence of arrays, optional
        Objective blocks. Missing means pure feasibility.
    """

    block_sizes: tuple
    A: tuple = field(repr=False)
    b: np.ndarray = field(repr=False)
    C: tuple = field(default=None, repr=False)

    def __post_init__(self):
        self.block_sizes = tuple(int(n) for n in self.block_sizes)
        if any(n < 1 for n in self.block_sizes):
            raise ValueError("block sizes must be positive")
        self.b = np.asarray(self.b, dtype=float).ravel()
        m = self.b.shape[0]
        if len(self.A) != len(self.block_sizes):
            raise ValueError("one constraint matrix per block is required")
        A = []
        for k, (Ak, n) in enumerate(zip(self.A, self.block_sizes)):
            Ak = sp.csr_matrix(Ak)
            if Ak.shape != (m, n * n):
                raise ValueError(f"block {k}: constraint data has shape {Ak.shape}, expected {(m, n * n)}")
            if not np.any(Ak.data.imag if np.iscomplexobj(Ak.data) else 0):
                Ak = sp.csr_matrix(Ak.real) if np.iscomplexobj(Ak.data) else Ak
            Ak.sum_duplicates()
            Ak.eliminate_zeros()
            A.append(Ak)
        self.A = tuple(A)
        if self.C is None:
            self.C = tuple(np.zeros((n, n)) for n in self.block_sizes)
        else:
            C = []
            for k, (Ck, n) in enumerate(zip(self.C, self.block_sizes)):
                Ck = Ck.toarray() if sp.issparse(Ck) else np.asarray(Ck)
                if Ck.shape != (n, n):
                    raise ValueError(f"objective block {k} has the wrong shape")
                if np.iscomplexobj(Ck) and not np.any(Ck.imag):
                    Ck = Ck.real
                C.append(Ck.copy())
            self.C = tuple(C)
        self._check_hermitian()

    def _check_hermitian(self, tol=1e-12):
        for k, (Ak, n) in enumerate(zip(self.A, self.block_sizes)):
            if Ak.nnz == 0:
                continue
            diff = Ak - Ak[:, _transpose_perm(n)].conj()
            if diff.nnz and np.max(np.abs(diff.data)) > tol * max(1.0, np.max(np.abs(Ak.data))):
                raise ValueError(f"block {k}: constraint matrices are not hermitian")
            Ck = self.C[k]
            if np.max(np.abs(Ck - Ck.conj().T), initial=0.0) > tol * max(1.0, np.max(np.abs(Ck))):
                raise ValueError(f"objective block {k} is not hermitian")

    @property
    def m(self) -> int:
        return self.b.shape[0]

    @property
    def num_blocks(self) -> int:
        return len(self.block_sizes)

    def block_is_real(self, k: int) -> bool:
        return not np.iscomplexobj(self.A[k].data) and not np.iscomplexobj(self.C[k])

    @property
    def is_real(self) -> bool:
        return all(self.block_is_real(k) for k in range(self.num_blocks))

    @property
    def has_objective(self) -> bool:
        return any(np.any(Ck) for Ck in self.C)

    def constraint(self, i: int) -> list:
        """Dense hermitian matrices of constraint ``i``, one per block."""
        return [Ak.getrow(i).toarray().reshape(n, n) for Ak, n in zip(self.A, self.block_sizes)]

    def apply(self, X) -> np.ndarray:
        """``(<A_i, X>)_i``."""
        out = np.zeros(self.m)
        for Ak, Xk in zip(self.A, X):
            out += np.real(Ak.conj() @ np.asarray(Xk).ravel())
        return out

    def adjoint(self, y) -> list:
        """``sum_i y_i A_i`` per block."""
        y = np.asarray(y, dtype=float)
        return [np.asarray(Ak.T @ y).reshape(n, n) for Ak, n in zip(self.A, self.block_sizes)]

    def objective(self, X) -> float:
        return float(sum(np.real(np.vdot(Ck, Xk)) for Ck, Xk in zip(self.C, X)))

    def dual_slack(self, y) -> list:
        return [Ck - Sk for Ck, Sk in zip(self.C, self.adjoint(y))]

    @classmethod
    def from_dense(cls, block_sizes, constraints, b, C=None) -> "SdpProblem":
        """Build from a list of constraints given as per-block dense matrices.

        Each constraint is a list (one entry per block, ``None`` for absent).
        """
        rows = [[] for _ in block_sizes]
        for mats in constraints:
            for k, n in enumerate(block_sizes):
                M = mats[k] if k < len(mats) else None
                if M is None:
                    rows[k].append(sp.csr_matrix((1, n * n)))
                else:
                    rows[k].append(sp.csr_matrix(np.asarray(M).reshape(1, n * n)))
        A = [sp.vstack(r, format="csr") if r else sp.csr_matrix((0, n * n)) for r, n in zip(rows, block_sizes)]
        return cls(tuple(block_sizes), tuple(A), np.asarray(b, dtype=float), C)


def realify_matrix(M) -> np.ndarray:
    """``[[Re M, -Im M], [Im M, Re M]]``."""
    M = np.asarray(M)
    return np.block([[M.real, -M.imag], [M.imag, M.real]])


def unrealify_matrix(R) -> np.ndarray:
    """Project a real ``2n x 2n`` matrix onto the complex structure and map it back."""
    n = R.shape[0] // 2
    return 0.5 * (R[:n, :n] + R[n:, n:]) + 0.5j * (R[n:, :n] - R[:n, n:])


def _realify_rows(Ak: sp.csr_matrix, n: int) -> sp.csr_matrix:
    """Row-wise ``vec(realify(A_i)) / 2`` for the stacked vectorized matrices."""
    coo = Ak.tocoo()
    r, c = np.divmod(coo.col, n)
    v = coo.data
    N = 2 * n
    re, im = np.real(v), np.imag(v)
    rows = np.concatenate([coo.row] * 4)
    cols = np.concatenate([r * N + c, r * N + c + n, (r + n) * N + c, (r + n) * N + c + n])
    vals = 0.5 * np.concatenate([re, -im, im, re])
    out = sp.csr_matrix((vals, (rows, cols)), shape=(Ak.shape[0], N * N))
    out.eliminate_zeros()
    return out


@dataclass
class Realified:
    """A real SDP together with the bookkeeping to map solutions back."""

    problem: SdpProblem
    complex_blocks: tuple

    def unmap_primal(self, Xr) -> list:
        return [unrealify_matrix(X) if cb else X for X, cb in zip(Xr, self.complex_blocks)]

    def unmap_dual(self, Zr) -> list:
        return [2.0 * unrealify_matrix(Z) if cb else Z for Z, cb in zip(Zr, self.complex_blocks)]


def realify(p: SdpProblem) -> Realified:
    """Embed complex blocks as real blocks of twice the size.

    With ``Xr = realify(X)`` and constraint data ``realify(A)/2`` the
    constraint values are unchanged, so ``b`` and ``y`` carry over.
    Blocks whose data is real are left untouched.
    """
    A, C, flags, sizes = [], [], [], []
    for k, n in enumerate(p.block_sizes):
        if p.block_is_real(k):
            A.append(p.A[k])
            C.append(np.real(p.C[k]))
            flags.append(False)
            sizes.append(n)
        else:
            A.append(_realify_rows(p.A[k], n))
            C.append(0.5 * realify_matrix(p.C[k]))
            flags.append(True)
            sizes.append(2 * n)
    return Realified(SdpProblem(tuple(sizes), tuple(A), p.b.copy(), tuple(C)), tuple(flags))
