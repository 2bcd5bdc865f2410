"""Primal-dual interior-point method on the homogeneous self-dual embedding.

Works on real symmetric blocks; complex problems are realified first.
Search directions are HKM directions with a Mehrotra predictor-corrector.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .problem import SdpProblem, realify

log = logging.getLogger(__name__)

OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"
INACCURATE = "Inaccurate"
ITERATION_LIMIT = "IterationLimit"


@dataclass
class SdpOptions:
    tol_feas: float = 1e-8
    tol_gap: float = 1e-8
    tol_psd: float = 1e-8
    tol_inf: float = 1e-8
    max_iter: int = 200
    step: float = 0.98
    max_constraints: int = 20_000
    rank_tol: float = 1e-12
    verbose: bool = False


@dataclass
class SdpSolution:
    status: str
    X: list = field(repr=False)
    y: np.ndarray = field(repr=False)
    Z: list = field(repr=False)
    primal_objective: float = float("nan")
    dual_objective: float = float("nan")
    primal_residual: float = float("nan")
    dual_residual: float = float("nan")
    gap: float = float("nan")
    iterations: int = 0
    dual_infeasible: bool = False
    message: str = ""
    ray: np.ndarray | None = field(default=None, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def _sym(M):
    return 0.5 * (M + M.T)


def _chol_inv(Z):
    L = np.linalg.cholesky(Z)
    Li = sla.solve_triangular(L, np.eye(Z.shape[0]), lower=True)
    return Li.T @ Li


def _max_step(X, dX):
    """Largest ``a`` with ``X + a dX >= 0`` (``inf`` if unbounded)."""
    try:
        L = np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        return 0.0
    Li = sla.solve_triangular(L, np.eye(X.shape[0]), lower=True)
    lam = np.linalg.eigvalsh(_sym(Li @ dX @ Li.T))[0]
    return np.inf if lam >= 0 else -1.0 / lam


def _factor_schur(M):
    """Cholesky factor of ``M``, adding a tiny diagonal shift when needed."""
    scale = max(float(np.max(np.diag(M))), 1e-300)
    for shift in (0.0, 1e-14, 1e-12, 1e-10):
        try:
            return sla.cho_factor(M + shift * scale * np.eye(M.shape[0]), lower=True)
        except (np.linalg.LinAlgError, sla.LinAlgError):
            continue
    return None


class _Ops:
    """Linear maps of a real block SDP restricted to a subset of rows."""

    def __init__(self, sizes, A, b, C):
        self.sizes = sizes
        self.A = A
        self.AT = [Ak.T.tocsr() for Ak in A]
        self.b = b
        self.C = C
        self.m = b.shape[0]
        self.csr = []
        for Ak, n in zip(A, sizes):
            Ak = Ak.tocsr()
            Ak.sum_duplicates()
            r, c = np.divmod(Ak.indices, n)
            self.csr.append((Ak, r, c))

    def fwd(self, X):
        out = np.zeros(self.m)
        for Ak, Xk in zip(self.A, X):
            out += Ak @ Xk.ravel()
        return out

    def adj(self, y):
        return [(ATk @ y).reshape(n, n) for ATk, n in zip(self.AT, self.sizes)]

    def schur(self, X, W):
        """``M_ij = <A_i, X A_j W>``.

        ``X A_j W`` is formed from the nonzeros of ``A_j`` as a sum of
        rank-one terms, which beats dense products for sparse rows.
        """
        M = np.zeros((self.m, self.m))
        for k, ((Ak, r, c), n) in enumerate(zip(self.csr, self.sizes)):
            if Ak.nnz == 0:
                continue
            ptr = Ak.indptr
            rows = np.flatnonzero(np.diff(ptr))
            Xg = X[k][:, r] * Ak.data
            Wg = W[k][c, :]
            chunk = max(1, 2_000_000 // (n * n))
            for s in range(0, rows.size, chunk):
                blk = rows[s:s + chunk]
                P = np.empty((blk.size, n, n))
                for t, j in enumerate(blk):
                    a, e = ptr[j], ptr[j + 1]
                    np.matmul(Xg[:, a:e], Wg[a:e], out=P[t])
                M[:, blk] += Ak @ P.reshape(blk.size, -1).T
        return _sym(M)


def _presolve(A, b, opts):
    """Scale rows to unit norm and drop linearly dependent ones.

    Returns (keep, scale, ray) where ``ray`` certifies inconsistency.
    """
    m = b.shape[0]
    norms2 = np.zeros(m)
    for Ak in A:
        norms2 += np.asarray(Ak.multiply(Ak).sum(axis=1)).ravel()
    norms = np.sqrt(norms2)
    bscale = 1.0 + np.linalg.norm(b)
    zero = norms == 0
    for i in np.flatnonzero(zero):
        if abs(b[i]) > opts.tol_feas * bscale:
            ray = np.zeros(m)
            ray[i] = np.sign(b[i])
            return None, None, ray
    scale = np.where(zero, 0.0, 1.0 / np.where(zero, 1.0, norms))
    idx = np.flatnonzero(~zero)
    if idx.size == 0:
        return idx, scale, None
    K = np.zeros((idx.size, idx.size))
    for Ak in A:
        As = sp.diags(scale[idx]) @ Ak[idx]
        K += (As @ As.T).toarray()
    K = _sym(K)
    c, piv, rank, info = sla.lapack.dpstrf(K.copy(), lower=1, tol=opts.rank_tol)
    piv = piv - 1
    if rank == idx.size:
        return idx, scale, None
    ind, dep = np.sort(piv[:rank]), np.sort(piv[rank:])
    bs = b[idx] * scale[idx]
    T = np.linalg.solve(K[np.ix_(ind, ind)], K[np.ix_(ind, dep)]).T
    res = bs[dep] - T @ bs[ind]
    worst = int(np.argmax(np.abs(res)))
    if abs(res[worst]) > 1e-9 * (1.0 + np.linalg.norm(bs)):
        ray = np.zeros(m)
        ray[idx[dep[worst]]] = scale[idx[dep[worst]]]
        ray[idx[ind]] = -T[worst] * scale[idx[ind]]
        ray *= np.sign(res[worst])
        return None, None, ray
    log.debug("presolve dropped %d dependent constraints", dep.size)
    return idx[ind], scale, None


def _solve_real(p: SdpProblem, opts: SdpOptions) -> SdpSolution:
    sizes = p.block_sizes
    m = p.m
    keep, scale, ray = _presolve(p.A, p.b, opts)
    if ray is not None:
        S = p.adjoint(ray)
        return SdpSolution(INFEASIBLE, [np.zeros((n, n)) for n in sizes], ray, [-s for s in S],
                           message="inconsistent linear constraints", ray=ray)
    D = sp.diags(scale[keep])
    A = [(D @ Ak[keep]).tocsr() for Ak in p.A]
    b = p.b[keep] * scale[keep]
    C = [np.asarray(Ck, dtype=float) for Ck in p.C]
    ops = _Ops(sizes, A, b, C)
    nvar = sum(sizes) + 1
    normb = np.linalg.norm(b)
    normC = np.sqrt(sum(np.sum(Ck**2) for Ck in C))

    X = [np.eye(n) for n in sizes]
    Z = [np.eye(n) for n in sizes]
    y = np.zeros(b.shape[0])
    tau, kappa = 1.0, 1.0
    status, msg = ITERATION_LIMIT, "iteration limit reached"
    stats = {}
    best = None

    def inner(U, V):
        return float(sum(np.sum(u * v) for u, v in zip(U, V)))

    for it in range(opts.max_iter + 1):
        Aty = ops.adj(y)
        rp = b * tau - ops.fwd(X)
        rd = [Ck * tau - Ak - Zk for Ck, Ak, Zk in zip(C, Aty, Z)]
        pobj = inner(C, X)
        dobj = float(b @ y)
        rg = kappa + pobj - dobj
        mu = (inner(X, Z) + tau * kappa) / nvar
        pres = np.linalg.norm(rp) / tau / (1.0 + normb)
        dres = np.sqrt(sum(np.sum(r**2) for r in rd)) / tau / (1.0 + normC)
        gap = abs(pobj - dobj) / tau / (1.0 + abs(pobj / tau) + abs(dobj / tau))
        stats = dict(pobj=pobj / tau, dobj=dobj / tau, pres=pres, dres=dres, gap=gap, it=it)
        if opts.verbose:
            log.info("it %3d pobj %+.6e dobj %+.6e pres %.1e dres %.1e gap %.1e tau %.1e kappa %.1e mu %.1e",
                     it, pobj / tau, dobj / tau, pres, dres, gap, tau, kappa, mu)
        score = max(pres, dres, gap)
        if best is None or score < best[0]:
            best = (score, [x.copy() for x in X], y.copy(), [z.copy() for z in Z], tau, dict(stats))
        if pres <= opts.tol_feas and dres <= opts.tol_feas and gap <= opts.tol_gap:
            status, msg = OPTIMAL, "converged"
            break
        if dobj > 0:
            pinf = np.sqrt(sum(np.sum((a + z) ** 2) for a, z in zip(Aty, Z))) / dobj
            if pinf <= opts.tol_inf:
                status, msg = INFEASIBLE, "primal infeasibility certificate found"
                break
        if pobj < 0:
            dinf = np.linalg.norm(ops.fwd(X)) / -pobj
            if dinf <= opts.tol_inf:
                status, msg = INACCURATE, "dual infeasible (primal unbounded)"
                stats["dual_infeasible"] = True
                break
        if it == opts.max_iter:
            break
        if mu < 1e-30 or tau < 1e-30 * max(1.0, kappa):
            status, msg = INACCURATE, "central path collapsed"
            break
        try:
            W = [_chol_inv(Zk) for Zk in Z]
        except np.linalg.LinAlgError:
            status, msg = INACCURATE, "dual slack lost definiteness"
            break
        M = ops.schur(X, W)
        Mf = _factor_schur(M)
        if Mf is None:
            status, msg = INACCURATE, "Schur complement not positive definite"
            break
        XCW = [_sym(Xk @ Ck @ Wk) for Xk, Ck, Wk in zip(X, C, W)]
        gv = ops.fwd(XCW)
        h2 = b + gv
        v = sla.cho_solve(Mf, h2)
        # den = kappa/tau + b'M^-1 b + <C, XCW> - gv'M^-1 gv; the last two cancel badly,
        # so use <R, XRW> with R = C - A^T M^-1 gv instead
        ug = sla.cho_solve(Mf, gv)
        R = [Ck - a for Ck, a in zip(C, ops.adj(ug))]
        q = max(inner(R, [_sym(Xk @ Rk @ Wk) for Xk, Rk, Wk in zip(X, R, W)]), 0.0)
        den = kappa / tau + q + float(b @ (v - ug))
        if not np.isfinite(den) or den <= 0:
            status, msg = INACCURATE, "homogeneous embedding lost its scale"
            break
        XrdW = [_sym(Xk @ rk @ Wk) for Xk, rk, Wk in zip(X, rd, W)]
        A_XrdW = ops.fwd(XrdW)
        C_XrdW = inner(C, XrdW)

        def direction(eta, Rc, rtau):
            RcW = [_sym(R @ Wk) for R, Wk in zip(Rc, W)]
            h1 = eta * rp - ops.fwd(RcW) + eta * A_XrdW
            u = sla.cho_solve(Mf, h1)
            num = eta * rg + rtau / tau + inner(C, RcW) - eta * C_XrdW - float((b - gv) @ u)
            dtau = num / den
            dy = u + dtau * v
            Atdy = ops.adj(dy)
            dZ = [_sym(eta * rk + Ck * dtau - a) for rk, Ck, a in zip(rd, C, Atdy)]
            dX = [_sym((R - Xk @ dz) @ Wk) for R, Xk, dz, Wk in zip(Rc, X, dZ, W)]
            dkappa = (rtau - kappa * dtau) / tau
            return dX, dy, dZ, dtau, dkappa

        def steplen(dX, dZ, dtau, dkappa):
            a = np.inf
            for Xk, dx in zip(X, dX):
                a = min(a, _max_step(Xk, dx))
            for Zk, dz in zip(Z, dZ):
                a = min(a, _max_step(Zk, dz))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkappa < 0:
                a = min(a, -kappa / dkappa)
            return a

        XZ = [Xk @ Zk for Xk, Zk in zip(X, Z)]
        dXa, dya, dZa, dta, dka = direction(1.0, [-xz for xz in XZ], -tau * kappa)
        aa = min(1.0, steplen(dXa, dZa, dta, dka))
        mua = (inner([Xk + aa * d for Xk, d in zip(X, dXa)], [Zk + aa * d for Zk, d in zip(Z, dZa)])
               + (tau + aa * dta) * (kappa + aa * dka)) / nvar
        sigma = min(1.0, max(0.0, mua / mu)) ** 3
        Rc = [sigma * mu * np.eye(n) - xz - dx @ dz for n, xz, dx, dz in zip(sizes, XZ, dXa, dZa)]
        rtau = sigma * mu - tau * kappa - dta * dka
        dX, dy, dZ, dtau, dkappa = direction(1.0 - sigma, Rc, rtau)
        a = min(1.0, opts.step * steplen(dX, dZ, dtau, dkappa))
        if not np.isfinite(a) or a < 1e-12:
            status, msg = INACCURATE, "step length collapsed"
            break
        X = [_sym(Xk + a * d) for Xk, d in zip(X, dX)]
        Z = [_sym(Zk + a * d) for Zk, d in zip(Z, dZ)]
        y = y + a * dy
        tau += a * dtau
        kappa += a * dkappa

    yfull = np.zeros(m)
    if status == INFEASIBLE:
        yfull[keep] = y * scale[keep]
        norm = float(p.b @ yfull)
        yfull /= norm
        Zs = [z / norm for z in Z]
        return SdpSolution(status, [np.zeros((n, n)) for n in sizes], yfull, Zs, iterations=stats["it"],
                           dual_objective=1.0, message=msg, ray=yfull.copy())
    if status != OPTIMAL and best is not None:
        _, X, y, Z, tau, stats = best
    yfull[keep] = y * scale[keep] / tau
    Xs = [x / tau for x in X]
    Zs = [z / tau for z in Z]
    return SdpSolution(status, Xs, yfull, Zs,
                       primal_objective=stats.get("pobj", np.nan), dual_objective=stats.get("dobj", np.nan),
                       primal_residual=stats.get("pres", np.nan), dual_residual=stats.get("dres", np.nan),
                       gap=stats.get("gap", np.nan), iterations=stats.get("it", 0),
                       dual_infeasible=bool(stats.get("dual_infeasible", False)), message=msg)


def solve(p: SdpProblem, opts: SdpOptions | None = None) -> SdpSolution:
    """Solve an equality-form SDP; complex blocks are realified internally.

    Returns an :class:`SdpSolution`. For ``Infeasible`` the dual vector is
    a ray normalized to ``b^T y = 1`` with ``sum_i y_i A_i <= 0``
    approximately, and ``Z`` approximates ``-sum_i y_i A_i``.
    """
    opts = opts or SdpOptions()
    if p.m > opts.max_constraints:
        raise ValueError(f"{p.m} constraints exceed the configured cap {opts.max_constraints}")
    if p.is_real:
        sol = _solve_real(p, opts)
        sol.X = [np.asarray(x) for x in sol.X]
        return sol
    rp = realify(p)
    sol = _solve_real(rp.problem, opts)
    sol.X = rp.unmap_primal(sol.X)
    sol.Z = rp.unmap_dual(sol.Z)
    return sol


def check_solution(p: SdpProblem, sol: SdpSolution) -> dict:
    """Independent residuals of a primal-dual pair in the original coordinates."""
    r = p.apply(sol.X) - p.b
    Z = p.dual_slack(sol.y)
    return {
        "primal_residual": float(np.max(np.abs(r), initial=0.0)),
        "min_eig_X": min(float(np.linalg.eigvalsh(x)[0]) for x in sol.X),
        "min_eig_Z": min(float(np.linalg.eigvalsh(z)[0]) for z in Z),
        "primal_objective": p.objective(sol.X),
        "dual_objective": float(p.b @ sol.y),
    }


def project_affine(p: SdpProblem, X, tol: float = 1e-12) -> list:
    """Least-norm correction of ``X`` onto ``{<A_i, X> = b_i}``."""
    r = p.b - p.apply(X)
    if not r.size:
        return [np.array(x) for x in X]
    K = np.zeros((p.m, p.m))
    for Ak in p.A:
        K += np.real((Ak.conj() @ Ak.T).toarray())
    w, V = np.linalg.eigh(_sym(K))
    keep = w > tol * max(1.0, w[-1])
    z = V[:, keep] @ ((V[:, keep].T @ r) / w[keep])
    corr = p.adjoint(z)
    out = []
    for x, c in zip(X, corr):
        x = x + c
        out.append(0.5 * (x + x.conj().T))
    return out
