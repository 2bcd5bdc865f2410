import json

import numpy as np
import pytest

from ncpsatz.certify.gns import check_positive_nc, find_witness, functional
from ncpsatz.certify.membership import (Certificate, MembershipProblem, assemble_membership_sdp, bound_variable,
                                        certificate_degree, check_membership, extract_certificate, make_problem,
                                        random_certified_poly, verify_certificate)
from ncpsatz.ncpoly import NCPoly, evaluate, random_poly
from ncpsatz.pencil import LinearPencil, augment_bounded, random_monic_pencil, sample_point
from ncpsatz.sdp import SdpSolution


def interval():
    """``diag(y, 1 - y)``: the interval ``0 <= y <= 1``."""
    return LinearPencil((np.diag([0.0, 1.0]), np.diag([1.0, -1.0])), ((0, 1), (1, 1)), (0.5,))


def one_plus_x():
    return LinearPencil((np.eye(1), np.eye(1)))


def const(g, c):
    return NCPoly.constant(g, float(c))


def test_certificate_degree_policy():
    assert [certificate_degree(D) for D in range(6)] == [0, 0, 1, 1, 2, 2]


def test_p_one_on_one_plus_x():
    res = check_membership(make_problem(const(1, 1), one_plus_x(), 0))
    assert res.member
    cert = res.certificate
    assert len(cert.sos) == 1 and len(cert.loc[0]) == 0
    assert cert.residual <= 1e-12
    assert np.allclose(np.abs(cert.sos[0].coefficient(())), 1)


def test_p_y_on_interval():
    y = NCPoly.variable(1, 1)
    res = check_membership(make_problem(y, interval(), 0))
    assert res.member
    assert res.certificate.residual <= 1e-6


def test_non_hermitian_rejected():
    p = NCPoly(2, {(1, 2): 1.0})
    with pytest.raises(ValueError, match="not hermitian"):
        make_problem(p, random_monic_pencil(np.random.default_rng(0), 2, (1,)))


def test_degree_too_high_rejected():
    with pytest.raises(ValueError):
        MembershipProblem(NCPoly(1, {(1, 1, 1): 1.0}), one_plus_x(), 0)


def _one_minus_y2_hand_cert():
    # 1 - y^2 = 1 (1 - y) 1 + (1 - y) y (1 - y) + y (1 - y) y
    y = NCPoly.variable(1, 1)
    one = const(1, 1)
    return Certificate(1, 1, 1, [], [[1 - y], [one, y]], 0.0)


def test_one_minus_y2_on_interval():
    y = NCPoly.variable(1, 1)
    p = const(1, 1) - y * y
    res = check_membership(make_problem(p, interval()))
    assert res.member
    cert = res.certificate
    assert cert.residual <= 1e-6
    assert all(len(qs) > 0 for qs in cert.loc)
    resid, margin = verify_certificate(p, interval(), cert, n_samples=20, seed=0)
    assert resid <= 1e-6 and margin >= -1e-6


def test_verify_hand_certificate_and_mutation():
    y = NCPoly.variable(1, 1)
    p = const(1, 1) - y * y
    cert = _one_minus_y2_hand_cert()
    resid, margin = verify_certificate(p, interval(), cert, n_samples=100, seed=1)
    assert resid <= 1e-12
    assert margin >= -1e-6
    cert.loc[1][1] = NCPoly.zero(1)
    resid, _ = verify_certificate(p, interval(), cert)
    assert resid > 1e-3


def test_rank_one_gram_gives_one_factor():
    L = one_plus_x()
    r = const(1, 1) + NCPoly.variable(1, 1)
    ms = assemble_membership_sdp(make_problem(r.adjoint() * r, L, 1))
    F = np.zeros((1, len(ms.sos_basis)))
    for i, w in enumerate(ms.sos_basis.words):
        F[0, i] = r.coefficient(w)[0, 0].real
    X = [F.T @ F] + [np.zeros((n, n)) for n in ms.problem.block_sizes[1:]]
    assert np.max(np.abs(ms.problem.apply(X) - ms.problem.b)) <= 1e-12
    sol = SdpSolution("Optimal", X, np.zeros(ms.problem.m), [])
    cert = extract_certificate(ms, sol)
    assert len(cert.sos) == 1 and cert.counts[1:] == (0,)
    assert cert.residual <= 1e-12


def test_certificate_json_round_trip():
    cert = _one_minus_y2_hand_cert()
    back = Certificate.from_json(json.loads(json.dumps(cert.to_json())))
    assert back.counts == cert.counts
    assert (back.assemble(interval()) - cert.assemble(interval())).max_abs() == 0


@pytest.mark.parametrize("seed", range(4))
def test_soundness_and_completeness_small(seed):
    rng = np.random.default_rng(seed)
    g, nu = 1 + seed % 2, 1 + seed // 2
    L = random_monic_pencil(rng, g, (2, 1))
    p, _ = random_certified_poly(rng, L, 1, nu=nu)
    res = check_membership(make_problem(p, L, 1))
    assert res.member
    resid, margin = verify_certificate(p, L, res.certificate, n_samples=30, seed=seed)
    assert resid <= 1e-6 and margin >= -1e-6
    assert res.certificate.degree() <= 1 + 1


def test_cone_additivity():
    rng = np.random.default_rng(9)
    L = random_monic_pencil(rng, 2, (2,))
    p1, _ = random_certified_poly(rng, L, 1)
    p2, _ = random_certified_poly(rng, L, 1)
    c1 = check_membership(make_problem(p1, L, 1)).certificate
    c2 = check_membership(make_problem(p2, L, 1)).certificate
    resid, _ = verify_certificate(p1 + p2, L, c1.concat(c2))
    assert resid <= 2e-6


def test_bound_variable_recentred_interval():
    L = LinearPencil((np.eye(2), np.diag([1.0, -1.0])), ((0, 1), (1, 1)))
    res = bound_variable(L, 1, cap=4.0)
    assert not res.unbounded
    assert abs(res.c - 1) <= 1e-3
    x = NCPoly.variable(1, 1)
    assert verify_certificate(const(1, res.c) - x, L, res.upper)[0] <= 1e-6
    assert verify_certificate(const(1, res.c) + x, L, res.lower)[0] <= 1e-6


def test_bound_variable_unbounded():
    res = bound_variable(one_plus_x(), 1, cap=16.0)
    assert res.unbounded and res.c is None


def test_bound_variable_augmented():
    L = augment_bounded(random_monic_pencil(np.random.default_rng(4), 2, (2,)), 2)
    for j in (1, 2):
        res = bound_variable(L, j, cap=8.0)
        assert res.c is not None and res.c <= 3 + 1e-3


def test_witness_for_negative_constant():
    L = random_monic_pencil(np.random.default_rng(1), 2, (2,))
    ws = find_witness(make_problem(const(2, -1), L, 0))
    assert ws.status == "NotPositive"
    assert abs(ws.witness.value + 1) <= 1e-6
    assert ws.witness.lmin_pencil >= -1e-6


def test_witness_for_y_minus_one():
    p = NCPoly.variable(1, 1) - const(1, 1)
    ws = find_witness(make_problem(p, interval(), 0))
    assert ws.status == "NotPositive"
    w = ws.witness
    assert w.value < 0 and w.lmin_pencil >= -1e-6
    assert w.lmin_p < 0


def _planted(rng, g, nu):
    L = random_monic_pencil(rng, g, (2, 1))
    X0 = sample_point(L, 3, seed=int(rng.integers(1000)))
    r = random_poly(rng, g, 1, nu)
    q = r.adjoint() * r
    m0 = np.linalg.eigvalsh(evaluate(q, X0))[0]
    p = q - (m0 + 0.5) * NCPoly.constant(g, np.eye(nu), nu)
    assert np.linalg.eigvalsh(evaluate(p, X0))[0] <= -0.1
    return p, L


@pytest.mark.parametrize("seed", range(3))
def test_gns_representation_identity(seed):
    rng = np.random.default_rng(seed)
    g, nu = 1 + seed % 2, 1 + seed // 2
    p, L = _planted(rng, g, nu)
    mp = make_problem(p, L)
    ws = find_witness(mp)
    assert ws.status == "NotPositive"
    w = ws.witness
    assert w.value <= -1e-3 and w.lmin_pencil >= -1e-6
    d = mp.d
    for _ in range(10):
        q = random_poly(rng, g, d, nu)
        r = random_poly(rng, g, d + 1, nu)
        lhs = w.gamma.conj() @ evaluate(q, w.Y).conj().T @ evaluate(r, w.Y) @ w.gamma
        rhs = functional(w.S, q.adjoint() * r)
        assert abs(lhs - rhs) <= 1e-6 * max(1.0, abs(rhs))


def test_dichotomy():
    rng = np.random.default_rng(11)
    L = random_monic_pencil(rng, 1, (2,))
    pos, _ = random_certified_poly(rng, L, 1)
    neg, L2 = _planted(rng, 1, 1)
    for p, LL in ((pos, L), (neg, L2), (const(1, 0), L)):
        v = check_positive_nc(p, LL)
        assert v.status in ("Positive", "NotPositive", "Inaccurate")
        if v.status == "Positive":
            assert v.certificate.residual <= 1e-6 and v.witness is None
        elif v.status == "NotPositive":
            assert v.witness.value <= -1e-6
    assert check_positive_nc(pos, L).status == "Positive"
    assert check_positive_nc(neg, L2).status == "NotPositive"
