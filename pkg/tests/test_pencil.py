import json
import warnings

import numpy as np
import pytest

from ncpsatz.pencil import (AffineChange, LinearPencil, augment_bounded, build_povm_pencil, evaluate_pencil,
                            membership, monicize, povm_letters, povm_monic_change, random_hermitian,
                            random_monic_pencil, sample_point, substitute)


def simplex2():
    """The two-outcome POVM pencil ``diag(y, 1 - y)``."""
    return LinearPencil((np.diag([0.0, 1.0]), np.diag([1.0, -1.0])), ((0, 1), (1, 1)), (0.5,))


def test_zero_point_of_monic_pencil():
    rng = np.random.default_rng(0)
    L = random_monic_pencil(rng, 2, (2, 1))
    Z = [np.zeros((3, 3))] * 2
    assert np.allclose(evaluate_pencil(L, Z), np.eye(9))
    assert membership(L, Z)


def test_simplex_midpoint_and_outside():
    L = simplex2()
    assert np.allclose(L.evaluate([np.array([[0.5]])]), np.diag([0.5, 0.5]))
    assert L.contains([np.array([[0.5]])])
    assert np.allclose(L.evaluate([np.array([[2.0]])]), np.diag([2.0, -1.0]))
    assert not L.contains([np.array([[2.0]])])


def test_evaluate_rejects_non_hermitian():
    L = simplex2()
    with pytest.raises(ValueError):
        L.evaluate([np.array([[0, 1], [0, 0]])])


def test_monicize_scaled_simplex():
    L = LinearPencil((np.diag([0.0, 2.0]), np.diag([2.0, -2.0])), ((0, 1), (1, 1)))
    M = monicize(L, AffineChange([[1.0]], [0.5]))
    assert M.is_monic
    assert np.allclose(M.coeffs[1], np.diag([2.0, -2.0]))


def test_monicize_identity_change():
    rng = np.random.default_rng(1)
    L = random_monic_pencil(rng, 2, (2,))
    M = monicize(L, AffineChange(np.eye(2), np.zeros(2)))
    assert all(np.array_equal(a, b) for a, b in zip(L.coeffs, M.coeffs))


def test_monicize_povm_direct_sum():
    ns = (2, 3)
    assert monicize(build_povm_pencil(ns), povm_monic_change(ns)).is_monic


def test_monicize_error():
    with pytest.raises(ValueError, match="not monicizable at"):
        monicize(build_povm_pencil((2,)), AffineChange([[1.0]], [0.0]))


def test_monicize_inverse_round_trip():
    rng = np.random.default_rng(2)
    for _ in range(10):
        L = random_monic_pencil(rng, 2, (2, 1))
        T = rng.standard_normal((2, 2)) + 2 * np.eye(2)
        ch = AffineChange(T, np.zeros(2))
        back = substitute(substitute(L, ch), ch.inverse())
        assert max(np.max(np.abs(a - b)) for a, b in zip(L.coeffs, back.coeffs)) <= 1e-12


def test_povm_pencil_two_outcomes():
    L = build_povm_pencil((2,))
    assert L.g == 1
    assert np.allclose(L.coeffs[0], np.diag([0.0, 2.0]))
    assert np.allclose(L.coeffs[1], np.diag([2.0, -2.0]))


def test_povm_pencil_2_3():
    L = build_povm_pencil((2, 3))
    assert L.g == 3
    assert povm_letters((2, 3)) == {(1, 1): 1, (2, 1): 2, (2, 2): 3}
    assert len(L.blocks) == 5 and all(s == 1 for _, s in L.blocks)
    E = [np.array([[0.5]]), np.array([[1 / 3]]), np.array([[1 / 3]])]
    assert L.contains(E)
    E[0] = np.array([[-0.1]])
    assert not L.contains(E)


def test_povm_pencil_rejects_small_factor():
    with pytest.raises(ValueError):
        build_povm_pencil((1, 3))


def _povm_conditions(ns, Y, tol):
    k = 0
    for n in ns:
        Ys = Y[k:k + n - 1]
        k += n - 1
        for y in Ys:
            if np.linalg.eigvalsh(y)[0] < -tol:
                return False
        if np.linalg.eigvalsh(np.eye(Ys[0].shape[0]) - sum(Ys))[0] < -tol:
            return False
    return True


def test_povm_membership_matches_componentwise_conditions():
    rng = np.random.default_rng(3)
    ns = (2, 3)
    L = build_povm_pencil(ns)
    hits = 0
    for _ in range(200):
        Y = [0.4 * random_hermitian(rng, 2) + 0.3 * np.eye(2) for _ in range(L.g)]
        expect = _povm_conditions(ns, Y, 0.0)
        assert L.contains(Y, tol=0.0) == expect
        hits += expect
    assert 0 < hits < 200


def test_augment_bounded_structure():
    L = LinearPencil((np.eye(1), np.eye(1)))
    A = augment_bounded(L, 2)
    assert np.allclose(A.coeffs[1][1:, 1:], 0.5 * np.array([[0, 1], [1, 0]]))
    assert A.blocks == ((0, 1), (1, 2))


def test_augment_bounded_is_bounded_and_inside():
    rng = np.random.default_rng(4)
    for n in (1, 2, 4):
        L = random_monic_pencil(rng, 2, (2,))
        Ln = augment_bounded(L, n)
        for s in range(10):
            X = sample_point(Ln, 3, seed=s)
            assert max(np.linalg.norm(x, 2) for x in X) <= n + 1e-6
            assert membership(L, X)
        assert not Ln.contains([(n + 1) * np.eye(2)] + [np.zeros((2, 2))])


def test_augment_bounded_needs_monic():
    with pytest.raises(ValueError):
        augment_bounded(build_povm_pencil((2,)), 1)


def test_sample_point_member_and_deterministic():
    rng = np.random.default_rng(5)
    L = random_monic_pencil(rng, 3, (2, 2))
    X = sample_point(L, 4, seed=11)
    assert membership(L, X, 1e-8)
    Y = sample_point(L, 4, seed=11)
    assert all(np.array_equal(a, b) for a, b in zip(X, Y))


def test_sample_point_on_povm_pencil():
    ns = (2, 3)
    L = build_povm_pencil(ns)
    for s in range(5):
        assert _povm_conditions(ns, sample_point(L, 3, seed=s), 1e-8)


def test_block_validation():
    A = np.array([[0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(ValueError, match="outside the declared blocks"):
        LinearPencil((np.eye(2), A), ((0, 1), (1, 1)))
    with pytest.raises(ValueError):
        LinearPencil((np.eye(2), A), ((0, 1),))


def test_hermitian_tolerance():
    A = np.array([[1.0, 1e-10], [0.0, 1.0]])
    with pytest.warns(UserWarning):
        L = LinearPencil((np.eye(2), A))
    assert np.allclose(L.coeffs[1], L.coeffs[1].conj().T)
    with pytest.raises(ValueError):
        LinearPencil((np.eye(2), np.array([[0.0, 1.0], [0.0, 0.0]])))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        LinearPencil((np.eye(2), np.array([[1.0, 1e-13], [0.0, 1.0]])))


def test_json_round_trip():
    L = build_povm_pencil((2, 3))
    M = LinearPencil.from_json(json.loads(json.dumps(L.to_json())))
    assert M.blocks == L.blocks and M.center == L.center
    assert all(np.array_equal(a, b) for a, b in zip(L.coeffs, M.coeffs))
