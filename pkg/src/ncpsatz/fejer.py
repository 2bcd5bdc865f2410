"""Positivity check and sum-of-squares factorization on free products of cyclic groups.

A hermitian group polynomial ``p`` of extent ``D`` is positive in every
unitary representation iff ``Omega(p)`` lies in the weighted SOS cone of
the POVM pencil at degree ``d = D // 2``. A certificate of that membership
is mapped back through ``split_map`` into summands ``q_i`` with
``p = sum q_i^* q_i`` and extents ``<= d + 1``; infeasibility yields a POVM
witness, dilated to a unitary tuple where ``p`` has a negative eigenvalue.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .certify.gns import TOL_WITNESS, MomentWitness, find_witness
from .certify.membership import Certificate, MembershipProblem, MembershipSdp, assemble_membership_sdp, check_membership
from .groupfree import (GroupPoly, PovmTuple, UnitaryTuple, evaluate_group, naimark_dilate, omega_map, projection,
                        sample_unitary_tuple, split_map)
from .ncpoly import num_words
from .pencil import build_povm_pencil
from .sdp import SdpOptions, psd_factor

log = logging.getLogger(__name__)

POSITIVE, NOT_POSITIVE, INACCURATE = "Positive", "NotPositive", "Inaccurate"


@dataclass
class FactorizationResult:
    """``p = sum_i q_i^* q_i`` with every ``q_i`` of extent ``<= extent_bound``."""

    summands: list
    extent_bound: int
    count_bound: int
    coeff_residual: float
    sample_margin: float
    d_hat: int
    d: int
    certificate: Certificate | None = field(default=None, repr=False)

    @property
    def N(self) -> int:
        return len(self.summands)

    def total(self) -> GroupPoly:
        q0 = self.summands[0]
        out = GroupPoly.zero(q0.sig, (q0.shape[1], q0.shape[1]))
        for q in self.summands:
            out = out + q.adjoint() * q
        return out

    def to_json(self) -> dict:
        return {
            "format": 1,
            "kind": "factorization",
            "extent": self.d_hat,
            "degree": self.d,
            "extent_bound": self.extent_bound,
            "count_bound": self.count_bound,
            "N": self.N,
            "coeff_residual": self.coeff_residual,
            "sample_margin": self.sample_margin,
            "summands": [q.to_json() for q in self.summands],
        }


@dataclass
class PositivityVerdict:
    """Outcome of a positivity check.

    For ``NotPositive``: ``povm`` and ``xi`` with
    ``<Omega(p)(E) xi, xi> = povm_value < 0``; if the dilation succeeded
    also ``unitaries`` with ``value = lambda_min(p(U)) < 0``.
    ``dilation_verified`` is false when only the POVM witness is valid.
    """

    status: str
    factorization: FactorizationResult | None = None
    povm: PovmTuple | None = None
    xi: np.ndarray | None = None
    povm_value: float = float("nan")
    unitaries: UnitaryTuple | None = None
    isometry: np.ndarray | None = None
    value: float = float("nan")
    dilation_verified: bool = False
    moment_witness: MomentWitness | None = field(default=None, repr=False)
    message: str = ""

    @property
    def positive(self) -> bool:
        return self.status == POSITIVE

    def to_json(self) -> dict:
        def mat(A):
            A = np.asarray(A)
            return {"re": A.real.tolist(), "im": A.imag.tolist()}

        out = {"format": 1, "kind": "verdict", "status": self.status, "message": self.message}
        if self.factorization is not None:
            out["factorization"] = self.factorization.to_json()
        if self.povm is not None:
            out["povm"] = {"factors": list(self.povm.sig.ns), "E": [[mat(e) for e in Ei] for Ei in self.povm.E]}
            out["xi"] = mat(self.xi)
            out["povm_value"] = self.povm_value
        if self.unitaries is not None:
            out["unitaries"] = [mat(u) for u in self.unitaries.U]
            out["isometry"] = mat(self.isometry)
        out["value"] = self.value
        out["dilation_verified"] = self.dilation_verified
        return out


def extent_degree(p: GroupPoly, degree: int | None = None) -> tuple:
    """``(extent, d)`` with ``d = extent // 2``; an override may only raise ``d``."""
    d_hat = max(p.extent, 0)
    d = d_hat // 2
    if degree is not None:
        if int(degree) < d:
            raise ValueError(f"degree {degree} is below the guaranteed degree {d}")
        d = int(degree)
    return d_hat, d


def _check_input(p: GroupPoly, tol: float = 1e-10):
    if p.shape[0] != p.shape[1]:
        raise ValueError("polynomial must have square coefficients")
    scale = max(1.0, p.max_abs())
    if not p.is_hermitian(1e-12 * scale):
        raise ValueError("polynomial is not hermitian")
    back = split_map(omega_map(p), p.sig)
    err = (back - p).max_abs()
    if err > tol * scale:
        raise RuntimeError(f"split(Omega(p)) differs from p by {err:.3e}")


def povm_problem(p: GroupPoly, degree: int | None = None) -> MembershipProblem:
    """Membership problem of ``Omega(p)`` against the POVM pencil."""
    _, d = extent_degree(p, degree)
    f = omega_map(p)
    f = 0.5 * (f + f.adjoint())
    return MembershipProblem(f.prune(1e-15), build_povm_pencil(p.sig.ns), d)


def povm_sdp(p: GroupPoly, degree: int | None = None) -> MembershipSdp:
    return assemble_membership_sdp(povm_problem(p, degree))


def summands_from_certificate(cert: Certificate, sig) -> list:
    """Group-algebra summands ``s(f)``, ``sqrt(n_i) p_{i,j} s(f)``; ``p_{i,n_i}`` completes factor ``i``."""
    out = [split_map(r, sig) for r in cert.sos]
    k = 0
    for i, n in enumerate(sig.ns, start=1):
        for j in range(1, n + 1):
            P = np.sqrt(n) * projection(sig, i, j)
            for q in cert.loc[k]:
                out.append(P * split_map(q, sig))
            k += 1
    return [q.prune(1e-14) for q in out if q.max_abs() > 0]


def merge_summands(summands: list, rank_tol: float = 1e-12) -> list:
    """Refactor ``sum q_i^* q_i`` into at most ``nu * (number of words)`` summands on the same words."""
    sig = summands[0].sig
    nu = summands[0].shape[1]
    words = sorted({w for q in summands for w in q.terms}, key=lambda w: (len(w), w))
    idx = {w: i for i, w in enumerate(words)}
    rows = []
    for q in summands:
        F = np.zeros((q.shape[0], nu * len(words)), dtype=complex)
        for w, c in q.terms.items():
            F[:, idx[w] * nu:(idx[w] + 1) * nu] = c
        rows.append(F)
    F = np.vstack(rows)
    R = psd_factor(F.conj().T @ F, rank_tol)
    return [GroupPoly(sig, {w: R[r:r + 1, i * nu:(i + 1) * nu] for i, w in enumerate(words)}, (1, nu)).prune(1e-15)
            for r in range(R.shape[0])]


def sample_margin(p: GroupPoly, n_samples: int = 100, seed=0, ell: int = 3) -> float:
    """Least eigenvalue of ``p(U)`` over random unitary tuples."""
    rng = np.random.default_rng(seed)
    out = np.inf
    for _ in range(n_samples):
        U = sample_unitary_tuple(p.sig, ell, seed=rng.integers(2**32))
        P = evaluate_group(p, U)
        out = min(out, float(np.linalg.eigvalsh(0.5 * (P + P.conj().T))[0]))
    return out


def _factorization(p, cert, d_hat, d, n_samples, seed) -> FactorizationResult:
    sig = p.sig
    nu = p.shape[0]
    summands = summands_from_certificate(cert, sig)
    count_bound = nu * sum(sig.ns) * num_words(sig.num_letters, d_hat)
    if summands:
        # one summand per rank of the combined Gram matrix; keeps N within count_bound
        summands = merge_summands(summands)
    res = FactorizationResult(summands, d + 1, count_bound, float("nan"), float("nan"), d_hat, d, cert)
    res.coeff_residual = (p - res.total()).max_abs() if summands else p.max_abs()
    res.sample_margin = sample_margin(p, n_samples, seed) if n_samples else float("nan")
    return res


def _clamp_povm(E: PovmTuple) -> PovmTuple:
    """Pull ``E`` towards the uniform POVM until every outcome is positive semidefinite."""
    m = E.margin()
    if m >= 0:
        return E
    floor = min(1.0 / n for n in E.sig.ns)
    t = -m / (floor - m) * (1 + 1e-9)
    I = np.eye(E.dim)
    return PovmTuple(E.sig, [[(1 - t) * e + t * I / n for e in Ei] for Ei, n in zip(E.E, E.sig.ns)])


def check_positive(p: GroupPoly, degree: int | None = None, opts: SdpOptions | None = None,
                   tol_cert: float = 1e-6, tol_witness: float = TOL_WITNESS, n_samples: int = 100,
                   seed=0) -> PositivityVerdict:
    """Certify positivity of ``p`` in all unitary representations or produce a witness."""
    _check_input(p)
    d_hat, d = extent_degree(p, degree)
    mp = povm_problem(p, d)
    res = check_membership(mp, opts, tol_cert)
    if res.member:
        fac = _factorization(p, res.certificate, d_hat, d, n_samples, seed)
        if fac.coeff_residual <= tol_cert:
            return PositivityVerdict(POSITIVE, fac)
        return PositivityVerdict(INACCURATE, fac, message=f"factorization residual {fac.coeff_residual:.3e}")
    return group_witness(p, d, opts, tol_witness, seed, mp)


def group_witness(p: GroupPoly, degree: int | None = None, opts: SdpOptions | None = None,
                  tol_witness: float = TOL_WITNESS, seed=0, mp: MembershipProblem | None = None) -> PositivityVerdict:
    """Witness search only: a POVM point from the dual moments, then its unitary dilation.

    Returns ``Positive`` (without factorization) when the dual bound shows
    no negativity at this degree.
    """
    if mp is None:
        _check_input(p)
        mp = povm_problem(p, degree)
    search = find_witness(mp, opts, tol_witness, seed=seed)
    if search.status == "Positive":
        return PositivityVerdict(POSITIVE, message=f"lower bound {search.lower_bound:.3e}")
    if search.status != "NotPositive":
        return PositivityVerdict(INACCURATE, message=search.message or f"witness search: {search.status}")
    mw = search.witness
    E = _clamp_povm(PovmTuple.from_letters(p.sig, mw.Y))
    xi = mw.gamma
    OP = omega_map(p).evaluate(E.letters())
    povm_value = float(np.real(xi.conj() @ OP @ xi))
    if not povm_value <= -1e-8:
        return PositivityVerdict(INACCURATE, message=f"POVM witness value {povm_value:.3e} is not negative")
    verdict = PositivityVerdict(NOT_POSITIVE, povm=E, xi=xi, povm_value=povm_value, value=povm_value,
                                moment_witness=mw)
    try:
        U, V = naimark_dilate(E)
    except ValueError as exc:
        verdict.message = f"dilation failed: {exc}"
        return verdict
    P = evaluate_group(p, U)
    lmin = float(np.linalg.eigvalsh(0.5 * (P + P.conj().T))[0])
    verdict.unitaries, verdict.isometry = U, V
    if U.check(1e-10) and lmin <= -1e-8:
        verdict.value = lmin
        verdict.dilation_verified = True
    else:
        verdict.message = f"dilated tuple not verified: lambda_min(p(U))={lmin:.3e}"
    return verdict


def factorize(p: GroupPoly, degree: int | None = None, opts: SdpOptions | None = None, tol_cert: float = 1e-6,
              n_samples: int = 100, seed=0):
    """Factorization of a positive ``p``, or the non-positive/inaccurate verdict."""
    v = check_positive(p, degree, opts, tol_cert, n_samples=n_samples, seed=seed)
    return v.factorization if v.positive else v
