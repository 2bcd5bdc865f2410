"""Weighted sum-of-squares membership as a semidefinite program.

A hermitian ``p`` lies in the cone of weighted squares of degree ``d`` for
the pencil ``L = (+)_k L_k`` when

    p = sum r^* r + sum_k sum q^* L_k q,     deg r, deg q <= d.

With Gram matrices ``G_0`` (over the words of length ``<= d``) and
localizing matrices ``M_k`` this is a linear condition on the
coefficients of ``p``, one block of real coordinates per word.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..ncpoly import NCPoly, WordBasis, enumerate_words, evaluate, word_adjoint, word_key
from ..pencil import LinearPencil, sample_point
from ..sdp import INFEASIBLE, IndefiniteError, SdpOptions, SdpProblem, project_affine, psd_factor, solve

log = logging.getLogger(__name__)

NEAR_FEASIBLE = 1e-6


def certificate_degree(D: int) -> int:
    """Smallest ``d`` with ``D <= 2d + 1``."""
    return 0 if D <= 0 else math.ceil((D - 1) / 2)


@dataclass(frozen=True)
class MembershipProblem:
    p: NCPoly
    L: LinearPencil
    d: int

    def __post_init__(self):
        if self.p.g != self.L.g:
            raise ValueError("polynomial and pencil use different alphabets")
        if not self.p.is_hermitian(1e-12 * max(1.0, self.p.max_abs())):
            raise ValueError("polynomial is not hermitian")
        if self.p.degree > 2 * self.d + 1:
            raise ValueError(f"degree {self.p.degree} exceeds 2d+1 = {2 * self.d + 1}")

    @property
    def nu(self) -> int:
        return self.p.shape[0]

    @property
    def g(self) -> int:
        return self.p.g


def make_problem(p: NCPoly, L: LinearPencil, d: int | None = None) -> MembershipProblem:
    auto = certificate_degree(p.degree)
    if d is None:
        d = auto
    return MembershipProblem(p, L, int(d))


@dataclass
class MembershipSdp:
    """The assembled SDP plus the bookkeeping needed to decode solutions.

    Attributes
    ----------
    problem : SdpProblem
        Block 0 is the Gram matrix over ``sos_basis``; block ``k+1`` is the
        localizing matrix of pencil block ``k`` over ``loc_basis``.
    words : WordBasis
        Words that index coefficient coordinates.
    coords : sparse matrix
        Row ``i`` holds the matrix ``B_i`` of the real coordinate
        ``l_i(P) = Re tr(B_i P_w)`` laid out over ``(word, a, b)`` slots.
    trace_row : array or None
        In shift mode, the trace of the empty-word coefficient, which is
        moved from the constraints into the objective.
    """

    problem: SdpProblem
    mp: MembershipProblem
    sos_basis: WordBasis
    loc_basis: WordBasis
    words: WordBasis
    coords: sp.csr_matrix = field(repr=False)
    trace_row: np.ndarray | None = field(default=None, repr=False)
    maps: tuple = field(default=(), repr=False)

    @property
    def shift(self) -> bool:
        return self.trace_row is not None

    def coefficient_vector(self, q: NCPoly) -> np.ndarray:
        """Coefficients of ``q`` laid out over ``(word, a, b)`` slots."""
        nu = self.mp.nu
        vec = np.zeros(len(self.words) * nu * nu, dtype=complex)
        for w, c in q.terms.items():
            i = self.words.index[w]
            vec[i * nu * nu:(i + 1) * nu * nu] = c.ravel()
        return vec

    def cone_element(self, X) -> NCPoly:
        """The polynomial ``sum_w C_w(X) w`` realized by the Gram blocks ``X``."""
        nu = self.mp.nu
        vec = sum(T @ np.asarray(x).ravel() for T, x in zip(self.maps, X))
        vec = np.asarray(vec).ravel()
        terms = {w: vec[i * nu * nu:(i + 1) * nu * nu].reshape(nu, nu) for i, w in enumerate(self.words.words)}
        return NCPoly(self.mp.g, terms, (nu, nu))

    def moments(self, coef, trace_weight: float = 0.0) -> dict:
        """Moment matrices ``S_w`` of the functional ``sum_i coef_i l_i (+ trace_weight tr P_0)``.

        The functional equals ``sum_w tr(S_w P_w)`` on hermitian families.
        """
        nu = self.mp.nu
        sigma = np.asarray(self.coords.T @ np.asarray(coef, dtype=float)).ravel().astype(complex)
        if trace_weight:
            sigma = sigma + trace_weight * self.trace_row
        blocks = sigma.reshape(len(self.words), nu, nu)
        S = {}
        for i, w in enumerate(self.words.words):
            ws = self.words.index[word_adjoint(w)]
            S[w] = 0.5 * (blocks[i].T + blocks[ws].conj())
        return S


def _herm_rows(K: sp.csr_matrix, n: int) -> sp.csr_matrix:
    """Hermitian constraint matrices from linear functionals ``X -> Re sum K[rc] X[r, c]``."""
    perm = np.arange(n * n).reshape(n, n).T.ravel()
    return (0.5 * (K.conj() + K[:, perm])).tocsr()


def _gram_map(sos: WordBasis, words: WordBasis, nu: int, shift_letter=None) -> sp.csr_matrix:
    """Sparse map from a Gram block over ``sos`` to ``(word, a, b)`` slots."""
    N = len(sos)
    n = nu * N
    rows, cols = [], []
    a = np.repeat(np.arange(nu), nu)
    b = np.tile(np.arange(nu), nu)
    for iu, u in enumerate(sos.words):
        us = word_adjoint(u)
        for iv, v in enumerate(sos.words):
            wi = words.index[us + v]
            rows.append(wi * nu * nu + a * nu + b)
            cols.append((iu * nu + a) * n + iv * nu + b)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    return sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(len(words) * nu * nu, n * n))


def _localizing_map(loc: WordBasis, words: WordBasis, nu: int, coeffs) -> sp.csr_matrix:
    """Map from a localizing block to word slots: ``sum_j sum_{u^* x_j v = w} <A_j, M[(.,u,a),(.,v,b)]>``."""
    N = len(loc)
    mu = coeffs[0].shape[0]
    blk = nu * N
    n = mu * blk
    a = np.repeat(np.arange(nu), nu)
    b = np.tile(np.arange(nu), nu)
    rows, cols, vals = [], [], []
    for j, A in enumerate(coeffs):
        s_idx, t_idx = np.nonzero(A)
        if s_idx.size == 0:
            continue
        letter = () if j == 0 else (j,)
        for iu, u in enumerate(loc.words):
            us = word_adjoint(u)
            for iv, v in enumerate(loc.words):
                wi = words.index[us + letter + v]
                for s, t in zip(s_idx, t_idx):
                    rows.append(wi * nu * nu + a * nu + b)
                    cols.append((s * blk + iu * nu + a) * n + t * blk + iv * nu + b)
                    vals.append(np.full(nu * nu, A[s, t], dtype=complex))
    if not rows:
        return sp.csr_matrix((len(words) * nu * nu, n * n))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(words) * nu * nu, n * n))


def _coordinates(words: WordBasis, nu: int, real: bool, shift: bool):
    """Real coordinate functionals, one group per pair ``{w, w^*}``."""
    rows, cols, vals = [], [], []
    trace_row = None
    r = 0

    def add(entries):
        nonlocal r
        for col, val in entries:
            rows.append(r)
            cols.append(col)
            vals.append(val)
        r += 1

    for wi, w in enumerate(words.words):
        ws = word_adjoint(w)
        if word_key(ws) < word_key(w):
            continue
        base = wi * nu * nu
        if ws != w:
            for a in range(nu):
                for b in range(nu):
                    add([(base + a * nu + b, 1.0)])
                    if not real:
                        add([(base + a * nu + b, -1j)])
            continue
        if shift and not w:
            for a in range(nu - 1):
                add([(base + a * nu + a, 1.0), (base + (a + 1) * nu + a + 1, -1.0)])
            trace_row = np.zeros(len(words) * nu * nu, dtype=complex)
            trace_row[[base + a * nu + a for a in range(nu)]] = 1.0
        else:
            for a in range(nu):
                add([(base + a * nu + a, 1.0)])
        for a in range(nu):
            for b in range(a + 1, nu):
                add([(base + a * nu + b, 1.0)])
                if not real:
                    add([(base + a * nu + b, -1j)])
    B = sp.csr_matrix((np.asarray(vals, dtype=complex), (rows, cols)), shape=(r, len(words) * nu * nu))
    return B, trace_row


def assemble_membership_sdp(mp: MembershipProblem, sos_degree: int | None = None, shift: bool = False) -> MembershipSdp:
    """Assemble the membership SDP.

    Parameters
    ----------
    mp : MembershipProblem
    sos_degree : int, optional
        Degree of the plain sum-of-squares part; defaults to ``mp.d``.
        Localizing factors always have degree ``mp.d``.
    shift : bool
        If true, the SDP maximizes ``lambda`` with ``p - lambda`` in the
        cone: the trace of the empty-word coordinate becomes the objective
        ``tr C_0(X) / nu`` and ``lambda = tr P_0 / nu - optimum``.
        Without shift the objective is zero (pure feasibility).
    """
    p, L, d = mp.p, mp.L, mp.d
    ds = d if sos_degree is None else int(sos_degree)
    nu, g = mp.nu, mp.g
    wmax = max(2 * ds, 2 * d + 1)
    words = enumerate_words(g, wmax)
    sos = enumerate_words(g, ds)
    loc = enumerate_words(g, d)
    real = L.is_real and not any(np.any(c.imag) for c in p.terms.values())
    maps = [_gram_map(sos, words, nu)]
    sizes = [nu * len(sos)]
    for k, (o, s) in enumerate(L.blocks):
        maps.append(_localizing_map(loc, words, nu, L.block_coeffs(k)))
        sizes.append(s * nu * len(loc))
    B, trace_row = _coordinates(words, nu, real, shift)
    A = [_herm_rows(B @ T, n) for T, n in zip(maps, sizes)]
    pvec = np.zeros(len(words) * nu * nu, dtype=complex)
    for w, c in p.terms.items():
        i = words.index[w]
        pvec[i * nu * nu:(i + 1) * nu * nu] = c.ravel()
    bvec = np.real(B @ pvec)
    C = None
    if shift:
        C = []
        for T, n in zip(maps, sizes):
            K = sp.csr_matrix(trace_row[None, :]) @ T
            C.append(_herm_rows(K, n).toarray().reshape(n, n) / nu)
        if real:
            C = [np.real(c) for c in C]
    if real:
        A = [sp.csr_matrix(a.real) for a in A]
    problem = SdpProblem(tuple(sizes), tuple(A), bvec, None if C is None else tuple(C))
    return MembershipSdp(problem, mp, sos, loc, words, B.tocsr(), trace_row, tuple(maps))


@dataclass
class Certificate:
    """Factors of ``p = sum r^* r + sum_k sum q^* L_k q``.

    ``sos`` holds polynomials with ``1 x nu`` coefficients, ``loc[k]``
    polynomials with ``mu_k x nu`` coefficients (one per Gram rank).
    """

    g: int
    nu: int
    d: int
    sos: list
    loc: list
    residual: float = float("nan")

    @property
    def counts(self) -> tuple:
        return (len(self.sos), *[len(q) for q in self.loc])

    def degree(self) -> int:
        degs = [r.degree for r in self.sos] + [q.degree for qs in self.loc for q in qs]
        return max(degs, default=-1)

    def assemble(self, L: LinearPencil) -> NCPoly:
        total = NCPoly.zero(self.g, (self.nu, self.nu))
        for r in self.sos:
            total = total + r.adjoint() * r
        for k, qs in enumerate(self.loc):
            Lk = L.block_poly(k)
            for q in qs:
                total = total + q.adjoint() * (Lk * q)
        return total

    def concat(self, other: "Certificate") -> "Certificate":
        """Certificate of the sum of the two certified polynomials."""
        if (self.g, self.nu) != (other.g, other.nu) or len(self.loc) != len(other.loc):
            raise ValueError("certificates are not compatible")
        return Certificate(self.g, self.nu, max(self.d, other.d), self.sos + other.sos,
                           [a + b for a, b in zip(self.loc, other.loc)])

    def to_json(self) -> dict:
        def rows(q):
            return {"word_rows": q.shape[0],
                    "terms": [{"word": list(w), "re": c.real.tolist(), "im": c.imag.tolist()} for w, c in q.items()]}

        return {
            "format": 1,
            "g": self.g,
            "coeff_dim": self.nu,
            "degree": self.d,
            "residual": self.residual,
            "sos": [rows(r) for r in self.sos],
            "localizing": [{"block": k, "factors": [rows(q) for q in qs]} for k, qs in enumerate(self.loc)],
        }

    @classmethod
    def from_json(cls, data: dict) -> "Certificate":
        g, nu = int(data["g"]), int(data["coeff_dim"])

        def poly(entry):
            terms = {tuple(t["word"]): np.asarray(t["re"]) + 1j * np.asarray(t["im"]) for t in entry["terms"]}
            return NCPoly(g, terms, (int(entry["word_rows"]), nu))

        loc = [[poly(q) for q in blk["factors"]] for blk in data["localizing"]]
        return cls(g, nu, int(data["degree"]), [poly(r) for r in data["sos"]], loc, float(data["residual"]))


def verify_certificate(p: NCPoly, L: LinearPencil, cert: Certificate, n_samples: int = 0, seed=0,
                       ell: int = 3) -> tuple:
    """Return ``(coeff_residual, min_eval_margin)``.

    The residual is the largest coefficient entry of
    ``p - sum r^* r - sum q^* L_k q``; the margin is the smallest
    eigenvalue of ``p(X)`` over ``n_samples`` random points of the
    spectrahedron (``inf`` when no samples are requested).
    """
    residual = (p - cert.assemble(L)).max_abs()
    margin = float("inf")
    if n_samples:
        rng = np.random.default_rng(seed)
        for _ in range(n_samples):
            X = sample_point(L, ell, int(rng.integers(2**63)))
            margin = min(margin, float(np.linalg.eigvalsh(evaluate(p, X))[0]))
    return residual, margin


def _clean_primal(ms: MembershipSdp, X, rank_tol: float, rounds: int = 8) -> list:
    """Alternate between the affine constraints and the PSD cone."""
    prob = ms.problem
    X = [np.asarray(x) for x in X]
    for _ in range(rounds):
        X = project_affine(prob, X)
        clipped = []
        for x in X:
            w, U = np.linalg.eigh(x)
            cut = rank_tol * max(w[-1], 0.0)
            w = np.where(w > cut, w, 0.0)
            clipped.append((U * w) @ U.conj().T)
        X = clipped
        if np.max(np.abs(prob.apply(X) - prob.b), initial=0.0) <= 1e-13 * (1 + np.max(np.abs(prob.b), initial=0)):
            break
    return X


def extract_certificate(ms: MembershipSdp, sol, rank_tol: float = 1e-8) -> Certificate:
    """Factor the Gram blocks of a (nearly) feasible primal solution into polynomial factors."""
    if sol.status == INFEASIBLE:
        raise ValueError("solution is an infeasibility certificate")
    mp = ms.mp
    nu, g = mp.nu, mp.g
    X = _clean_primal(ms, sol.X, rank_tol)
    # blocks that are negligible against the whole solution carry no factors
    floor = rank_tol * max(float(np.linalg.eigvalsh(x)[-1]) for x in X)
    try:
        F0 = psd_factor(X[0], rank_tol, floor)
    except IndefiniteError as exc:
        raise IndefiniteError(f"sum-of-squares Gram: {exc}") from exc
    sos = [NCPoly.from_rows(F0[i:i + 1], ms.sos_basis, nu) for i in range(F0.shape[0])]
    loc = []
    N = len(ms.loc_basis)
    for k, (o, s) in enumerate(mp.L.blocks):
        try:
            Fk = psd_factor(X[k + 1], rank_tol, floor)
        except IndefiniteError as exc:
            raise IndefiniteError(f"localizing Gram {k}: {exc}") from exc
        qs = []
        for row in Fk:
            coeffs = row.reshape(s, N, nu)
            terms = {w: coeffs[:, i, :] for i, w in enumerate(ms.loc_basis.words)}
            qs.append(NCPoly(g, terms, (s, nu)))
        loc.append(qs)
    cert = Certificate(g, nu, max(ms.sos_basis.d, mp.d), sos, loc)
    cert.residual = (mp.p - cert.assemble(mp.L)).max_abs()
    return cert


@dataclass
class MembershipResult:
    member: bool
    status: str
    certificate: Certificate | None = None
    solution: object = field(default=None, repr=False)
    sdp: MembershipSdp | None = field(default=None, repr=False)


def check_membership(mp: MembershipProblem, opts: SdpOptions | None = None, tol_cert: float = 1e-6,
                     rank_tol: float = 1e-8) -> MembershipResult:
    """Solve the feasibility SDP and, when feasible, extract and check a certificate."""
    ms = assemble_membership_sdp(mp)
    sol = solve(ms.problem, opts)
    if sol.status == INFEASIBLE:
        return MembershipResult(False, sol.status, None, sol, ms)
    # a stalled solve with a nearly feasible iterate may still yield a certificate
    # that passes the symbolic check below
    if not sol.optimal and not sol.primal_residual <= NEAR_FEASIBLE:
        return MembershipResult(False, sol.status, None, sol, ms)
    try:
        cert = extract_certificate(ms, sol, rank_tol)
    except IndefiniteError as exc:
        log.warning("certificate extraction failed: %s", exc)
        return MembershipResult(False, "Inaccurate", None, sol, ms)
    ok = cert.residual <= tol_cert
    return MembershipResult(ok, "Optimal" if ok else "Inaccurate", cert, sol, ms)


@dataclass
class BoundResult:
    j: int
    c: float | None
    unbounded: bool
    upper: Certificate | None = None
    lower: Certificate | None = None


def bound_variable(L: LinearPencil, j: int, cap: float = 2.0**10, tol: float = 1e-3,
                   opts: SdpOptions | None = None) -> BoundResult:
    """Least ``c <= cap`` (up to ``tol``) with ``c - x_j`` and ``c + x_j`` in the degree-0 cone."""
    if not L.is_monic:
        raise ValueError("pencil must be monic")
    g = L.g
    xj = NCPoly.variable(g, j)

    def certs(c):
        out = []
        for sign in (-1.0, 1.0):
            res = check_membership(MembershipProblem(NCPoly.constant(g, c) + sign * xj, L, 0), opts)
            if not res.member:
                return None
            out.append(res.certificate)
        return out

    top = certs(cap)
    if top is None:
        return BoundResult(j, None, True)
    lo, hi, best = 0.0, float(cap), top
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        cs = certs(mid)
        if cs is None:
            lo = mid
        else:
            hi, best = mid, cs
    return BoundResult(j, hi, False, best[0], best[1])


def random_certified_poly(rng, L: LinearPencil, d: int, nu: int = 1, n_sos: int = 2, n_loc: int = 1,
                          complex_coeffs: bool = True) -> tuple:
    """``p = sum r^* r + sum q^* L_k q`` with random factors of degree ``<= d``."""
    from ..ncpoly import random_poly

    g = L.g
    sos = [random_poly(rng, g, d, nu, rows=1, complex_coeffs=complex_coeffs) for _ in range(n_sos)]
    loc = []
    for k, (o, s) in enumerate(L.blocks):
        loc.append([random_poly(rng, g, d, nu, rows=s, complex_coeffs=complex_coeffs) for _ in range(n_loc)])
    cert = Certificate(g, nu, d, sos, loc, 0.0)
    p = cert.assemble(L)
    p = 0.5 * (p + p.adjoint())
    return p, cert
