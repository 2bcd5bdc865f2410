import io

import numpy as np
import pytest
import scipy.sparse as sp

from ncpsatz.sdp import (INFEASIBLE, IndefiniteError, SdpOptions, SdpProblem, check_solution, export_sdpa,
                         import_sdpa, parse_sdpa, psd_factor, realify, realify_matrix, sdpa_text, solve,
                         unrealify_matrix)


def _herm(rng, n, cplx=False):
    B = rng.standard_normal((n, n))
    if cplx:
        B = B + 1j * rng.standard_normal((n, n))
    return (B + B.conj().T) / 2


def random_problem(rng, sizes, m, cplx=False, objective=True):
    """Feasible and bounded: ``b`` comes from a PD point, ``C`` is PD plus a range element."""
    cons = [[_herm(rng, n, cplx) for n in sizes] for _ in range(m)]
    X0 = []
    for n in sizes:
        B = rng.standard_normal((n, n)) + (1j * rng.standard_normal((n, n)) if cplx else 0)
        X0.append(B @ B.conj().T + np.eye(n))
    b = [sum(np.real(np.vdot(a, x)) for a, x in zip(c, X0)) for c in cons]
    C = None
    if objective:
        y0 = rng.standard_normal(m)
        C = [np.eye(n) + sum(y * c[k] for y, c in zip(y0, cons)) for k, n in enumerate(sizes)]
    return SdpProblem.from_dense(sizes, cons, b, C)


def test_trivial_1x1():
    p = SdpProblem.from_dense((1,), [[np.eye(1)]], [1.0], [np.eye(1)])
    sol = solve(p)
    assert sol.optimal
    assert abs(sol.X[0][0, 0] - 1) <= 1e-8
    assert abs(sol.primal_objective - 1) <= 1e-8


def test_negative_trace_infeasible():
    p = SdpProblem.from_dense((1,), [[np.eye(1)]], [-1.0])
    sol = solve(p)
    assert sol.status == INFEASIBLE
    # the ray certifies: b^T y > 0 with -A^T y PSD
    assert p.b @ sol.y > 0
    assert np.linalg.eigvalsh(-p.adjoint(sol.y)[0])[0] >= -1e-8


def test_unit_diagonal_max_offdiagonal():
    E11, E22 = np.diag([1.0, 0.0]), np.diag([0.0, 1.0])
    C = -np.array([[0.0, 1.0], [1.0, 0.0]])
    p = SdpProblem.from_dense((2,), [[E11], [E22]], [1, 1], [C])
    sol = solve(p)
    assert sol.optimal
    assert abs(sol.primal_objective + 2) <= 1e-7
    assert np.allclose(sol.X[0], np.ones((2, 2)), atol=1e-4)


def test_complex_block():
    # maximize 2 Im X12 with unit diagonal: optimum at X12 = i
    E11, E22 = np.diag([1.0, 0.0]), np.diag([0.0, 1.0])
    C = np.array([[0, 1j], [-1j, 0]])
    p = SdpProblem.from_dense((2,), [[E11], [E22]], [1, 1], [C])
    sol = solve(p)
    assert sol.optimal
    assert abs(sol.primal_objective + 2) <= 1e-7
    assert np.allclose(sol.X[0], [[1, -1j], [1j, 1]], atol=1e-4)


@pytest.mark.parametrize("seed", range(12))
def test_weak_duality_and_residuals(seed):
    rng = np.random.default_rng(seed)
    p = random_problem(rng, (3, 1, 2), 4, cplx=seed % 2 == 1)
    opts = SdpOptions()
    sol = solve(p, opts)
    assert sol.optimal
    chk = check_solution(p, sol)
    assert chk["primal_objective"] >= chk["dual_objective"] - opts.tol_gap * (1 + abs(chk["primal_objective"]))
    # residuals are relative to the data scale
    assert chk["primal_residual"] <= 1e-7 * (1 + np.linalg.norm(p.b))
    scale = 1 + max(np.linalg.norm(c) for c in p.C)
    assert chk["min_eig_X"] >= -1e-7 and chk["min_eig_Z"] >= -1e-7 * scale


def test_deterministic():
    p = random_problem(np.random.default_rng(3), (3, 2), 3, cplx=True)
    a, b = solve(p), solve(p)
    assert a.iterations == b.iterations
    assert np.array_equal(a.y, b.y)
    assert all(np.array_equal(x, z) for x, z in zip(a.X, b.X))


def test_realify_spectra_doubled():
    rng = np.random.default_rng(0)
    for _ in range(20):
        H = _herm(rng, 4, cplx=True)
        R = realify_matrix(H)
        assert np.allclose(R, R.T)
        assert np.max(np.abs(np.linalg.eigvalsh(R) - np.repeat(np.linalg.eigvalsh(H), 2))) <= 1e-10
        assert np.max(np.abs(unrealify_matrix(R) - H)) <= 1e-14


def test_realified_problem_same_optimum():
    p = random_problem(np.random.default_rng(7), (2, 2), 3, cplx=True)
    rp = realify(p)
    assert rp.problem.is_real
    assert abs(solve(p).primal_objective - solve(rp.problem).primal_objective) <= 1e-6


def test_psd_factor_examples():
    F = psd_factor(np.diag([4.0, 0.0]))
    assert F.shape == (1, 2)
    assert np.allclose(np.abs(F), [[2, 0]])
    F = psd_factor(np.eye(3))
    assert F.shape == (3, 3)
    assert np.allclose(F.conj().T @ F, np.eye(3))


def test_psd_factor_round_trip():
    rng = np.random.default_rng(1)
    for r in (1, 2, 4):
        F0 = rng.standard_normal((r, 5)) + 1j * rng.standard_normal((r, 5))
        G = F0.conj().T @ F0
        F = psd_factor(G)
        assert F.shape[0] == r
        assert np.max(np.abs(F.conj().T @ F - G)) <= 1e-10


def test_psd_factor_rejects_indefinite():
    with pytest.raises(IndefiniteError):
        psd_factor(np.diag([1.0, -0.5]))


def test_toy_export_matches_reference():
    p = SdpProblem.from_dense((1,), [[np.eye(1)]], [1.0], [np.eye(1)])
    ref = "1\n1\n1\n1.0\n0 1 1 1 -1.0\n1 1 1 1 1.0\n"
    assert sdpa_text(p) == ref
    buf = io.StringIO()
    export_sdpa(p, buf)
    assert buf.getvalue() == ref


def test_export_two_blocks_reference():
    A1 = [np.array([[1.0, 2.0], [2.0, 0.0]]), np.eye(1) * 3]
    A2 = [np.zeros((2, 2)), np.eye(1)]
    p = SdpProblem.from_dense((2, 1), [A1, A2], [1.0, 2.0])
    ref = ("2\n2\n2 1\n1.0 2.0\n"
           "1 1 1 1 1.0\n1 1 1 2 2.0\n1 2 1 1 3.0\n2 2 1 1 1.0\n")
    assert sdpa_text(p) == ref


def test_export_empty_objective():
    p = SdpProblem.from_dense((2,), [[np.eye(2)]], [1.0])
    text = sdpa_text(p)
    assert not any(line.startswith("0 ") for line in text.splitlines())
    q = parse_sdpa(text)
    assert not q.has_objective


def test_export_groups_diagonal_blocks():
    sizes = (1, 1, 2, 1)
    p = random_problem(np.random.default_rng(2), sizes, 3)
    text = sdpa_text(p)
    assert text.splitlines()[2] == "-2 2 1"
    q = parse_sdpa(text)
    assert q.block_sizes == sizes


def _same(p, q):
    assert p.block_sizes == q.block_sizes
    assert np.allclose(p.b, q.b, rtol=0, atol=0)
    for a, c in zip(p.A, q.A):
        assert (a != c).nnz == 0
    for a, c in zip(p.C, q.C):
        assert np.array_equal(a, c)


@pytest.mark.parametrize("seed", range(5))
def test_export_import_round_trip(seed, tmp_path):
    rng = np.random.default_rng(seed)
    sizes = tuple(int(n) for n in rng.integers(1, 4, size=3))
    p = random_problem(rng, sizes, 4, objective=seed % 2 == 0)
    path = tmp_path / "p.dat-s"
    export_sdpa(p, str(path))
    _same(p, import_sdpa(str(path)))


def test_export_rejects_complex():
    p = random_problem(np.random.default_rng(0), (2,), 1, cplx=True)
    with pytest.raises(ValueError):
        sdpa_text(p)


def test_problem_validation():
    with pytest.raises(ValueError):
        SdpProblem((2,), (sp.csr_matrix((1, 3)),), np.zeros(1))
    with pytest.raises(ValueError):
        SdpProblem.from_dense((2,), [[np.array([[0.0, 1.0], [0.0, 0.0]])]], [0.0])
