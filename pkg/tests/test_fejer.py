import json

import numpy as np
import pytest

from ncpsatz.cli import main
from ncpsatz.fejer import (FactorizationResult, check_positive, extent_degree, factorize, group_witness,
                           merge_summands)
from ncpsatz.groupfree import FreeProductSignature, GroupPoly, evaluate_group, omega_at, random_group_poly
from ncpsatz.ncpoly import NCPoly, num_words
from ncpsatz.pencil import LinearPencil


def z3(c0, c1=1.0, c2=1.0):
    sig = FreeProductSignature((3,))
    return GroupPoly(sig, {(): c0, ((1, 1),): c1, ((1, 2),): c2})


def check_factorization(p, fac, tol):
    assert isinstance(fac, FactorizationResult)
    assert fac.coeff_residual <= tol
    assert (p - fac.total()).max_abs() <= tol
    assert all(q.extent <= fac.d_hat // 2 + 1 for q in fac.summands)
    assert fac.N <= p.nu * sum(p.sig.ns) * num_words(p.sig.num_letters, fac.d_hat)


def check_witness(p, v):
    assert v.status == "NotPositive"
    # recompute both values directly from the returned points
    P = evaluate_group(p, v.unitaries)
    assert abs(np.linalg.eigvalsh(P)[0] - v.value) <= 1e-10
    assert v.value <= -1e-8
    OP = omega_at(p, v.povm)
    assert abs(np.real(v.xi.conj() @ OP @ v.xi) - v.povm_value) <= 1e-10
    assert v.povm_value <= -1e-8
    assert v.povm.check(1e-10) and v.unitaries.check(1e-10)


def test_z3_positive():
    p = z3(2.0)
    v = check_positive(p)
    assert v.status == "Positive"
    check_factorization(p, v.factorization, 1e-8)
    assert all(q.extent <= 1 for q in v.factorization.summands)
    assert v.factorization.sample_margin >= 1 - 1e-6


def test_z3_not_positive():
    p = z3(0.5)
    v = check_positive(p)
    check_witness(p, v)
    assert abs(v.value + 0.5) <= 1e-6
    assert v.dilation_verified


def test_z2z2_square():
    sig = FreeProductSignature((2, 2))
    r = GroupPoly(sig, {(): 1.0, ((1, 1), (2, 1)): 1.0})
    p = r.adjoint() * r
    fac = factorize(p)
    check_factorization(p, fac, 1e-8)
    assert all(q.extent <= 2 for q in fac.summands)


def test_identity_positive():
    p = GroupPoly.constant((2, 3), 1.0)
    fac = factorize(p, n_samples=10)
    check_factorization(p, fac, 1e-8)
    # the solver returns an interior Gram matrix, so e may come back split over several summands
    assert all(q.extent <= 1 for q in fac.summands)
    assert fac.sample_margin >= 1 - 1e-6


def test_minus_identity():
    p = GroupPoly.constant((2,), -1.0)
    v = check_positive(p)
    check_witness(p, v)
    assert abs(v.value + 1) <= 1e-6


def test_z2_generator():
    p = GroupPoly.generator((2,), 1)
    v = check_positive(p)
    check_witness(p, v)
    assert abs(v.value + 1) <= 1e-6


def test_group_witness_only_on_positive_input():
    v = group_witness(z3(2.0))
    assert v.status == "Positive" and v.factorization is None


def test_non_hermitian_rejected():
    with pytest.raises(ValueError):
        check_positive(GroupPoly.generator((3,), 1))


def test_degree_override():
    p = z3(2.0)
    assert extent_degree(p) == (1, 0)
    assert extent_degree(p, 2) == (1, 2)
    sig = FreeProductSignature((2, 2))
    q = GroupPoly(sig, {(): 3.0, ((1, 1), (2, 1)): 1.0, ((2, 1), (1, 1)): 1.0})
    with pytest.raises(ValueError):
        extent_degree(q, 0)
    v = check_positive(p, degree=1, n_samples=10)
    assert v.status == "Positive"
    check_factorization(p, v.factorization, 1e-6)


def test_matrix_coefficients():
    rng = np.random.default_rng(4)
    sig = FreeProductSignature((2, 3))
    qs = [random_group_poly(rng, sig, 1, nu=2, rows=1) for _ in range(3)]
    p = sum((q.adjoint() * q for q in qs[1:]), qs[0].adjoint() * qs[0])
    p = 0.5 * (p + p.adjoint())
    fac = factorize(p, n_samples=20)
    check_factorization(p, fac, 1e-6)
    assert fac.sample_margin >= -1e-6


@pytest.mark.parametrize("ns", [(2, 2), (2, 3), (3, 3), (2, 2, 2)])
def test_constructed_positive(ns):
    rng = np.random.default_rng(sum(ns))
    sig = FreeProductSignature(ns)
    qs = [random_group_poly(rng, sig, 1, rows=1, n_terms=3) for _ in range(2)]
    p = qs[0].adjoint() * qs[0] + qs[1].adjoint() * qs[1]
    p = 0.5 * (p + p.adjoint())
    fac = factorize(p, n_samples=20)
    check_factorization(p, fac, 1e-6)


def test_merge_summands_preserves_sum():
    rng = np.random.default_rng(1)
    sig = FreeProductSignature((2, 3))
    qs = [random_group_poly(rng, sig, 1, nu=2, rows=1, n_terms=2) for _ in range(8)]
    merged = merge_summands(qs)
    total = sum((q.adjoint() * q for q in qs[1:]), qs[0].adjoint() * qs[0])
    again = sum((q.adjoint() * q for q in merged[1:]), merged[0].adjoint() * merged[0])
    assert (total - again).max_abs() <= 1e-10
    words = {w for q in qs for w in q.terms}
    assert len(merged) <= 2 * len(words)


# command line


def _dump(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def test_cli_factorize(tmp_path):
    src = _dump(tmp_path / "p.json", z3(2.0).to_json())
    out = tmp_path / "f.json"
    assert main(["factorize", "--poly", src, "--out", str(out), "--samples", "10"]) == 0
    res = json.loads(out.read_text())
    assert res["kind"] == "factorization" and res["N"] >= 1
    assert res["coeff_residual"] <= 1e-8


def test_cli_factorize_deterministic(tmp_path):
    src = _dump(tmp_path / "p.json", z3(2.0).to_json())
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    main(["factorize", "--poly", src, "--out", str(a), "--samples", "5", "--seed", "3"])
    main(["factorize", "--poly", src, "--out", str(b), "--samples", "5", "--seed", "3"])
    assert a.read_text() == b.read_text()


def test_cli_witness(tmp_path):
    src = _dump(tmp_path / "p.json", z3(0.5).to_json())
    out = tmp_path / "w.json"
    assert main(["witness", "--poly", src, "--out", str(out)]) == 1
    res = json.loads(out.read_text())
    assert res["status"] == "NotPositive" and abs(res["value"] + 0.5) <= 1e-6
    assert main(["factorize", "--poly", src, "--out", str(out)]) == 1


def test_cli_certify_and_witness_free(tmp_path):
    L = LinearPencil((np.diag([0.0, 1.0]), np.diag([1.0, -1.0])), ((0, 1), (1, 1)), (0.5,))
    pen = _dump(tmp_path / "L.json", L.to_json())
    y = NCPoly.variable(1, 1)
    pos = _dump(tmp_path / "pos.json", (NCPoly.constant(1, 1.0) - y * y).to_json())
    neg = _dump(tmp_path / "neg.json", (y - NCPoly.constant(1, 1.0)).to_json())
    out = tmp_path / "c.json"
    assert main(["certify", "--poly", pos, "--pencil", pen, "--out", str(out)]) == 0
    assert json.loads(out.read_text())["residual"] <= 1e-6
    assert main(["certify", "--poly", neg, "--pencil", pen, "--out", str(out)]) == 1
    assert json.loads(out.read_text())["kind"] == "moment-witness"
    assert main(["witness", "--poly", neg, "--pencil", pen, "--out", str(out)]) == 1
    assert json.loads(out.read_text())["value"] < 0


def test_cli_export_sdpa(tmp_path):
    from ncpsatz.sdp import import_sdpa

    src = _dump(tmp_path / "p.json", z3(2.0).to_json())
    out = tmp_path / "p.dat-s"
    assert main(["export-sdpa", "--poly", src, "--out", str(out)]) == 0
    assert import_sdpa(str(out)).m > 0
    out2 = tmp_path / "q.dat-s"
    assert main(["factorize", "--poly", src, "--solver", "sdpa-file", "--out", str(out2)]) == 0
    assert out.read_text() == out2.read_text()


def test_cli_extract_check(tmp_path):
    out = tmp_path / "e.json"
    assert main(["extract-check", "--g", "2", "--depth", "2", "--samples", "5", "--out", str(out)]) == 0
    res = json.loads(out.read_text())
    assert res["ok"] and res["max_error"] <= 1e-9


def test_cli_input_errors(tmp_path, capsys):
    assert main(["factorize", "--poly", str(tmp_path / "missing.json")]) == 3
    bad = tmp_path / "bad.json"
    bad.write_text('{"factors": [3],\n "terms": [}')
    assert main(["factorize", "--poly", str(bad)]) == 3
    assert "line 2" in capsys.readouterr().err
    nofield = _dump(tmp_path / "nf.json", {"factors": [3]})
    assert main(["factorize", "--poly", nofield]) == 3
    assert "coeff_dim" in capsys.readouterr().err
    y = _dump(tmp_path / "y.json", NCPoly.variable(1, 1).to_json())
    assert main(["certify", "--poly", y]) == 3
    assert main(["bogus"]) == 3
    pen = _dump(tmp_path / "L.json", LinearPencil((np.diag([0.0, 1.0]), np.diag([1.0, -1.0]))).to_json())
    assert main(["certify", "--poly", _dump(tmp_path / "m.json", NCPoly.constant(1, -1.0).to_json()),
                 "--pencil", pen]) == 3
    assert "interior point" in capsys.readouterr().err
    assert main(["certify", "--poly", y, "--degree", "-1"]) == 3
