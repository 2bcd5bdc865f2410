"""Witnesses of non-positivity from moment data.

A linear functional ``phi`` on polynomials of degree ``<= 2d+2`` that is
nonnegative on the weighted sums of squares but negative on ``p`` is
turned into a finite tuple ``Y`` with ``L(Y) >= 0`` and a unit vector
``gamma`` with ``<p(Y) gamma, gamma> = phi(p) < 0`` (truncated GNS
construction).

Moment data are dictionaries ``S`` mapping words to ``nu x nu`` matrices;
the functional is ``phi(q) = sum_w tr(S_w Q_w)``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..ncpoly import NCPoly, WordBasis, enumerate_words, evaluate, word_adjoint, word_powers
from ..pencil import LinearPencil, sample_point
from ..sdp import INFEASIBLE, OPTIMAL, SdpOptions, solve
from .membership import (NEAR_FEASIBLE, MembershipProblem, MembershipResult, assemble_membership_sdp, check_membership,
                         make_problem)

log = logging.getLogger(__name__)

TOL_WITNESS = 1e-6


class WitnessError(RuntimeError):
    """Raised when the extracted point does not certify non-positivity."""


def functional(S: dict, q: NCPoly) -> complex:
    """``phi(q) = sum_w tr(S_w Q_w)``; words outside ``S`` raise ``KeyError``."""
    return complex(sum(np.trace(S[w] @ c) for w, c in q.items()))


def moment_matrix(S: dict, basis: WordBasis, nu: int, letter=()) -> np.ndarray:
    """Block matrix with block ``(v, w)`` equal to ``S[v^* letter w]^T``.

    With ``letter=()`` this is the Gram matrix of the GNS vectors
    ``phi_{w,e}``; with ``letter=(j,)`` it is the matrix of left
    multiplication by ``x_j`` paired against the same vectors.
    """
    N = len(basis)
    H = np.zeros((N * nu, N * nu), dtype=complex)
    for iv, v in enumerate(basis.words):
        vs = word_adjoint(v)
        for iw, w in enumerate(basis.words):
            H[iv * nu:(iv + 1) * nu, iw * nu:(iw + 1) * nu] = S[vs + tuple(letter) + w].T
    return H


def point_moments(points, words: WordBasis, nu: int) -> dict:
    """Moments of ``q -> mean_k tr q(X_k) / (nu * ell)``, a normalized state."""
    acc = {w: 0.0 for w in words.words}
    for X in points:
        ell = X[0].shape[0]
        pw = word_powers(X, words.words)
        for w in words.words:
            acc[w] += np.trace(pw[w]) / ell
    K = len(points)
    return {w: (acc[w] / (K * nu)) * np.eye(nu, dtype=complex) for w in words.words}


def interior_moments(L: LinearPencil, words: WordBasis, nu: int, deg: int, n_points: int = 4, seed=0) -> dict:
    """Moments of an average of normalized traces at interior points of ``D_L``.

    The matrix size is large enough for the moment matrix over words of
    degree ``<= deg`` to be generically nonsingular.
    """
    N = len(enumerate_words(L.g, deg))
    ell = int(np.ceil(np.sqrt(N))) + 1
    rng = np.random.default_rng(seed)
    pts = [sample_point(L, ell, seed=rng.integers(2**32), interior=True) for _ in range(n_points)]
    return point_moments(pts, words, nu)


def mix_moments(parts) -> dict:
    """``sum_k t_k S_k`` for ``parts = [(t_k, S_k), ...]``."""
    keys = parts[0][1].keys()
    return {w: sum(t * S[w] for t, S in parts) for w in keys}


@dataclass
class MomentWitness:
    """A point ``Y`` of the free spectrahedron and a unit vector ``gamma``.

    ``value = <p(Y) gamma, gamma>``; ``lmin_pencil`` is the smallest
    eigenvalue of ``L(Y)`` and ``lmin_p`` that of ``p(Y)``.
    """

    Y: list
    gamma: np.ndarray
    value: float
    lmin_pencil: float
    lmin_p: float
    rank: int
    S: dict = field(default_factory=dict, repr=False)
    functional_value: float = float("nan")

    def is_valid(self, tol: float = TOL_WITNESS) -> bool:
        return self.value < 0 and self.lmin_pencil >= -tol

    def to_json(self) -> dict:
        def mat(A):
            A = np.asarray(A)
            return {"re": A.real.tolist(), "im": A.imag.tolist()}

        return {
            "format": 1,
            "kind": "moment-witness",
            "dim": self.rank,
            "Y": [mat(y) for y in self.Y],
            "gamma": mat(self.gamma),
            "value": self.value,
            "lmin_pencil": self.lmin_pencil,
            "lmin_p": self.lmin_p,
        }


def gns_witness(p: NCPoly, L: LinearPencil, S: dict, d: int, tol: float = TOL_WITNESS,
                rank_tol: float = 1e-8, check: bool = True) -> MomentWitness:
    """Truncated GNS construction from moments ``S`` over words of degree ``<= 2d+2``.

    The Gram matrix of the vectors indexed by words of degree ``<= d`` is
    diagonalized; eigenvalues below ``rank_tol`` times the largest are
    discarded. ``Y_j`` is the compression of left multiplication by
    ``x_j`` onto their span, written in the orthonormal eigenbasis.
    """
    nu = p.shape[0]
    g = L.g
    B = enumerate_words(g, d)
    G = moment_matrix(S, B, nu)
    G = 0.5 * (G + G.conj().T)
    lam, V = np.linalg.eigh(G)
    if lam[-1] <= 0:
        raise WitnessError("witness inaccurate: moment matrix has no positive part")
    if lam[0] < -1e3 * rank_tol * lam[-1]:
        log.warning("moment matrix is indefinite: lambda_min=%.3e", lam[0])
    keep = lam > rank_tol * lam[-1]
    lam, V = lam[keep], V[:, keep]
    isq = 1.0 / np.sqrt(lam)
    Y = []
    for j in range(1, g + 1):
        H = moment_matrix(S, B, nu, (j,))
        Yj = isq[:, None] * (V.conj().T @ H @ V) * isq[None, :]
        Y.append(0.5 * (Yj + Yj.conj().T))
    R = np.sqrt(lam)[:, None] * V.conj().T
    gamma = R[:, :nu].T.reshape(-1)
    P = evaluate(p, Y)
    value = float(np.real(gamma.conj() @ P @ gamma))
    lmin_p = float(np.linalg.eigvalsh(0.5 * (P + P.conj().T))[0])
    lmin_L = L.min_eig(Y)
    fval = float(np.real(functional(S, p)))
    wit = MomentWitness(Y, gamma, value, lmin_L, lmin_p, int(lam.size), S, fval)
    if check and not wit.is_valid(tol):
        raise WitnessError(f"witness inaccurate: value={value:.3e}, lambda_min(L(Y))={lmin_L:.3e}")
    return wit


@dataclass
class WitnessSearch:
    """Outcome of the witness SDP.

    ``lower_bound`` is the largest ``lambda`` with ``p - lambda`` in the
    cone (``-inf`` when the SDP is infeasible), ``witness`` the extracted
    point or ``None``.
    """

    status: str
    lower_bound: float
    witness: MomentWitness | None
    message: str = ""
    solution: object = field(default=None, repr=False)


def _nearly_optimal(sol) -> bool:
    """A stalled solve whose last iterate is close to optimal; the witness is re-verified anyway."""
    return max(sol.primal_residual, sol.dual_residual, sol.gap) <= NEAR_FEASIBLE


def find_witness(mp: MembershipProblem, opts: SdpOptions | None = None, tol: float = TOL_WITNESS,
                 mix: float = 0.1, seed=0, rank_tol: float = 1e-8) -> WitnessSearch:
    """Look for a point of ``D_L`` where ``p`` fails to be positive semidefinite.

    Maximizes ``lambda`` with ``p - lambda`` in the cone (squares of degree
    ``d+1``, localizing factors of degree ``d``). The optimal dual
    functional is blended with a small multiple of a strictly positive
    interior functional so that its moment matrix is well conditioned,
    keeping the value negative. If the SDP is infeasible, the
    infeasibility ray plays the role of the dual functional.
    """
    p, L, d = mp.p, mp.L, mp.d
    nu = mp.nu
    ms = assemble_membership_sdp(mp, sos_degree=d + 1, shift=True)
    sol = solve(ms.problem, opts)
    phi0 = interior_moments(L, ms.words, nu, d + 1, seed=seed)
    v0 = float(np.real(functional(phi0, p)))
    if sol.status == INFEASIBLE:
        ray = ms.moments(-sol.ray)
        vr = float(np.real(functional(ray, p)))
        if not vr < 0:
            return WitnessSearch("Inaccurate", -np.inf, None, "infeasibility ray is not negative on p", sol)
        s = (abs(v0) + 1.0) / abs(vr)
        S = mix_moments([(1.0, phi0), (s, ray)])
        lower = -np.inf
    elif sol.status == OPTIMAL or _nearly_optimal(sol):
        trace0 = float(np.real(np.trace(p.coefficient(()))))
        lower = trace0 / nu - sol.primal_objective
        if lower >= -tol:
            return WitnessSearch("Positive", lower, None, "p - lambda is in the cone for some lambda >= -tol", sol)
        Sopt = ms.moments(-sol.y, 1.0 / nu)
        gap = v0 - lower
        theta = mix if gap <= 0 else min(mix, mix * abs(lower) / gap)
        S = mix_moments([(1.0 - theta, Sopt), (theta, phi0)])
    else:
        return WitnessSearch("Inaccurate", np.nan, None, sol.message, sol)
    try:
        wit = gns_witness(p, L, S, d, tol, rank_tol)
    except WitnessError as exc:
        return WitnessSearch("Inaccurate", lower, None, str(exc), sol)
    return WitnessSearch("NotPositive", lower, wit, "", sol)


@dataclass
class NCVerdict:
    """Exactly one of: certificate found, witness found, inaccurate."""

    status: str
    membership: MembershipResult | None = None
    search: WitnessSearch | None = None
    message: str = ""

    @property
    def certificate(self):
        return None if self.membership is None else self.membership.certificate

    @property
    def witness(self):
        return None if self.search is None else self.search.witness


def check_positive_nc(p: NCPoly, L: LinearPencil, d: int | None = None, opts: SdpOptions | None = None,
                      tol_cert: float = 1e-6, tol: float = TOL_WITNESS, seed=0) -> NCVerdict:
    """Decide positivity of ``p`` on ``D_L`` at degree ``d``: certificate, witness or inaccurate."""
    mp = make_problem(p, L, d)
    res = check_membership(mp, opts, tol_cert)
    if res.member:
        return NCVerdict("Positive", res)
    search = find_witness(mp, opts, tol, seed=seed)
    if search.status == "NotPositive" and search.witness.value <= -tol:
        return NCVerdict("NotPositive", res, search)
    msg = search.message or f"membership status {res.status}, lower bound {search.lower_bound:.3e}"
    return NCVerdict("Inaccurate", res, search, msg)
