"""Free-monoid words and noncommutative polynomials with matrix coefficients.

A word is a tuple of 1-based letter indices; ``()`` is the empty word.
A polynomial stores a sparse map ``word -> coefficient`` where every
coefficient is a complex ``rows x cols`` matrix. Square coefficients
(``rows == cols == nu``) are the common case, rectangular ones appear as
certificate factors.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

Word = tuple

#: degree reported for the zero polynomial
ZERO_DEGREE = -1


def word_key(w: Word):
    """Sort key for graded lexicographic order."""
    return (len(w), tuple(w))


def word_adjoint(w: Word) -> Word:
    return tuple(reversed(w))


def num_words(g: int, d: int) -> int:
    """Number of words of length at most ``d`` in ``g`` letters."""
    if d < 0:
        return 0
    return sum(g**i for i in range(d + 1))


def check_word(w: Sequence[int], g: int) -> Word:
    w = tuple(int(a) for a in w)
    for a in w:
        if a < 1 or a > g:
            raise ValueError(f"letter {a} outside 1..{g}")
    return w


@dataclass(frozen=True)
class WordBasis:
    """All words of length at most ``d`` in graded lex order."""

    g: int
    d: int
    words: tuple = field(repr=False)
    index: dict = field(repr=False, compare=False)

    def __len__(self):
        return len(self.words)

    def __iter__(self):
        return iter(self.words)

    def __getitem__(self, i):
        return self.words[i]


def enumerate_words(g: int, d: int) -> WordBasis:
    """Enumerate the words of length ``<= d`` in ``g`` letters.

    Examples
    --------
    >>> enumerate_words(2, 2).words
    ((), (1,), (2,), (1, 1), (1, 2), (2, 1), (2, 2))
    """
    if int(g) != g or g < 1:
        raise ValueError(f"alphabet size must be positive, got {g}")
    if int(d) != d or d < 0:
        raise ValueError(f"degree must be non-negative, got {d}")
    words = []
    for k in range(d + 1):
        words.extend(itertools.product(range(1, g + 1), repeat=k))
    words = tuple(tuple(w) for w in words)
    return WordBasis(g, d, words, {w: i for i, w in enumerate(words)})


def _as_matrix(c, shape=None) -> np.ndarray:
    a = np.asarray(c, dtype=complex)
    if a.ndim == 0:
        if shape is None:
            shape = (1, 1)
        if shape[0] != shape[1]:
            raise ValueError("scalar coefficient needs a square shape")
        a = a * np.eye(shape[0], dtype=complex)
    if a.ndim != 2:
        raise ValueError("coefficients must be matrices")
    return a


class NCPoly:
    """Noncommutative polynomial ``sum_w P_w w`` with matrix coefficients.

    Parameters
    ----------
    g : int
        Number of letters.
    terms : mapping
        ``word -> coefficient``. Scalars are promoted to multiples of the
        identity of size ``shape``. Exactly zero coefficients are dropped.
    shape : tuple, optional
        Coefficient shape ``(rows, cols)``. Inferred from the terms if
        omitted; required for the zero polynomial (defaults to ``(1, 1)``).
    """

    __slots__ = ("g", "shape", "terms")
    __array_ufunc__ = None

    def __init__(self, g: int, terms: Mapping | None = None, shape=None):
        if g < 1:
            raise ValueError("alphabet size must be positive")
        self.g = int(g)
        clean = {}
        for w, c in (terms or {}).items():
            w = check_word(w, self.g)
            a = _as_matrix(c, shape).copy()
            if shape is None:
                shape = a.shape
            if a.shape != tuple(shape):
                raise ValueError(f"coefficient of {w} has shape {a.shape}, expected {tuple(shape)}")
            if w in clean:
                a = clean[w] + a
            if np.any(a != 0):
                clean[w] = a
            else:
                clean.pop(w, None)
        self.shape = tuple(shape) if shape is not None else (1, 1)
        self.terms = clean

    # construction helpers
    @classmethod
    def zero(cls, g, shape=(1, 1)):
        return cls(g, {}, shape)

    @classmethod
    def constant(cls, g, c=1.0, nu=1):
        a = _as_matrix(c, (nu, nu))
        return cls(g, {(): a}, a.shape)

    @classmethod
    def variable(cls, g, j, nu=1):
        return cls(g, {(j,): np.eye(nu)}, (nu, nu))

    @classmethod
    def from_rows(cls, F, basis: WordBasis, nu: int) -> "NCPoly":
        """Polynomial whose coefficient of the ``i``-th basis word is ``F[:, i*nu:(i+1)*nu]``."""
        F = np.atleast_2d(np.asarray(F, dtype=complex))
        if F.shape[1] != nu * len(basis):
            raise ValueError("row length does not match nu * N(d)")
        terms = {w: F[:, i * nu:(i + 1) * nu] for i, w in enumerate(basis.words)}
        return cls(basis.g, terms, (F.shape[0], nu))

    @property
    def coeff_dim(self) -> int:
        return self.shape[1]

    @property
    def nu(self) -> int:
        return self.shape[1]

    @property
    def degree(self) -> int:
        if not self.terms:
            return ZERO_DEGREE
        return max(len(w) for w in self.terms)

    def words(self) -> list:
        return sorted(self.terms, key=word_key)

    def coefficient(self, w) -> np.ndarray:
        w = tuple(w)
        if w in self.terms:
            return self.terms[w]
        return np.zeros(self.shape, dtype=complex)

    def items(self):
        for w in self.words():
            yield w, self.terms[w]

    def is_zero(self) -> bool:
        return not self.terms

    def __len__(self):
        return len(self.terms)

    def __repr__(self):
        return f"NCPoly(g={self.g}, shape={self.shape}, terms={len(self.terms)}, degree={self.degree})"

    def _check_compatible(self, other: "NCPoly"):
        if self.g != other.g:
            raise ValueError(f"alphabet mismatch: {self.g} vs {other.g}")

    # arithmetic
    def __add__(self, other):
        if not isinstance(other, NCPoly):
            other = NCPoly.constant(self.g, other, self.shape[0])
        self._check_compatible(other)
        if self.shape != other.shape:
            raise ValueError(f"shape mismatch: {self.shape} vs {other.shape}")
        terms = {w: c.copy() for w, c in self.terms.items()}
        for w, c in other.terms.items():
            terms[w] = terms[w] + c if w in terms else c
        return NCPoly(self.g, terms, self.shape)

    __radd__ = __add__

    def __neg__(self):
        return NCPoly(self.g, {w: -c for w, c in self.terms.items()}, self.shape)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, NCPoly):
            return multiply(self, other)
        return NCPoly(self.g, {w: c * other for w, c in self.terms.items()}, self.shape)

    def __rmul__(self, other):
        return NCPoly(self.g, {w: other * c for w, c in self.terms.items()}, self.shape)

    def adjoint(self) -> "NCPoly":
        return adjoint(self)

    def left_matmul(self, A) -> "NCPoly":
        """Multiply every coefficient from the left by the matrix ``A``."""
        A = np.asarray(A, dtype=complex)
        return NCPoly(self.g, {w: A @ c for w, c in self.terms.items()}, (A.shape[0], self.shape[1]))

    def is_hermitian(self, tol: float = 0.0) -> bool:
        if self.shape[0] != self.shape[1]:
            return False
        for w, c in self.terms.items():
            if np.max(np.abs(self.coefficient(word_adjoint(w)) - c.conj().T)) > tol:
                return False
        return True

    def prune(self, eps: float = 1e-14) -> "NCPoly":
        """Drop coefficients whose entries are all below ``eps`` in modulus."""
        return NCPoly(self.g, {w: c for w, c in self.terms.items() if np.max(np.abs(c)) > eps}, self.shape)

    def max_abs(self) -> float:
        """Largest coefficient entry in modulus (0 for the zero polynomial)."""
        if not self.terms:
            return 0.0
        return max(float(np.max(np.abs(c))) for c in self.terms.values())

    def evaluate(self, X) -> np.ndarray:
        return evaluate(self, X)

    def to_json(self) -> dict:
        if self.shape[0] != self.shape[1]:
            raise ValueError("JSON format stores square coefficients only")
        return {
            "g": self.g,
            "coeff_dim": self.shape[0],
            "terms": [
                {"word": list(w), "re": c.real.tolist(), "im": c.imag.tolist()}
                for w, c in self.items()
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "NCPoly":
        g = int(data["g"])
        nu = int(data["coeff_dim"])
        terms = {}
        for k, t in enumerate(data["terms"]):
            re = np.asarray(t["re"], dtype=float)
            im = np.asarray(t.get("im", np.zeros_like(re)), dtype=float)
            if re.shape != (nu, nu) or im.shape != (nu, nu):
                raise ValueError(f"terms[{k}]: coefficient must be {nu}x{nu}")
            w = tuple(t["word"])
            c = re + 1j * im
            terms[w] = terms[w] + c if w in terms else c
        return cls(g, terms, (nu, nu))


def multiply(p: NCPoly, q: NCPoly) -> NCPoly:
    """Convolution product: coefficient of ``w`` is ``sum_{uv=w} P_u Q_v``."""
    p._check_compatible(q)
    if p.shape[1] != q.shape[0]:
        raise ValueError(f"coefficient shapes {p.shape} and {q.shape} do not compose")
    terms = {}
    for u, a in p.terms.items():
        for v, b in q.terms.items():
            w = u + v
            c = a @ b
            if w in terms:
                terms[w] += c
            else:
                terms[w] = c
    return NCPoly(p.g, terms, (p.shape[0], q.shape[1]))


def adjoint(p: NCPoly) -> NCPoly:
    """Reverse every word and conjugate-transpose every coefficient."""
    return NCPoly(p.g, {word_adjoint(w): c.conj().T for w, c in p.terms.items()}, (p.shape[1], p.shape[0]))


def word_powers(X: Sequence[np.ndarray], words: Iterable[Word]) -> dict:
    """Map each word (and its prefixes) to the matrix product ``X^w``."""
    ell = X[0].shape[0] if len(X) else 0
    cache = {(): np.eye(ell, dtype=complex)}

    def power(w):
        if w not in cache:
            cache[w] = power(w[:-1]) @ X[w[-1] - 1]
        return cache[w]

    for w in sorted(words, key=word_key):
        power(tuple(w))
    return cache


def check_tuple(X, g: int) -> list:
    X = [np.asarray(x, dtype=complex) for x in X]
    if len(X) != g:
        raise ValueError(f"expected a tuple of {g} matrices, got {len(X)}")
    if not X:
        raise ValueError("empty tuple")
    ell = X[0].shape[0]
    for x in X:
        if x.shape != (ell, ell):
            raise ValueError("tuple entries must be square of equal size")
    return X


def evaluate(p: NCPoly, X) -> np.ndarray:
    """Return ``sum_w P_w kron X^w`` (coefficient as the outer factor)."""
    X = check_tuple(X, p.g)
    ell = X[0].shape[0]
    out = np.zeros((p.shape[0] * ell, p.shape[1] * ell), dtype=complex)
    powers = word_powers(X, p.terms)
    for w, c in p.terms.items():
        out += np.kron(c, powers[w])
    return out


def gram_to_poly(G, basis: WordBasis, nu: int) -> NCPoly:
    """Return ``V_d^* G V_d``: the coefficient of ``w`` is ``sum_{u^* v = w} G[u, v]``.

    ``G`` is ``(nu N) x (nu N)`` with ``nu x nu`` blocks indexed by pairs of
    basis words.
    """
    G = np.asarray(G, dtype=complex)
    n = nu * len(basis)
    if G.shape != (n, n):
        raise ValueError(f"Gram matrix must be {n}x{n}, got {G.shape}")
    terms = {}
    for i, u in enumerate(basis.words):
        us = word_adjoint(u)
        for j, v in enumerate(basis.words):
            blk = G[i * nu:(i + 1) * nu, j * nu:(j + 1) * nu]
            w = us + v
            if w in terms:
                terms[w] = terms[w] + blk
            else:
                terms[w] = blk.copy()
    return NCPoly(basis.g, terms, (nu, nu))


def random_poly(rng, g: int, d: int, nu: int = 1, rows=None, density: float = 1.0,
                hermitian: bool = False, complex_coeffs: bool = True) -> NCPoly:
    """Random polynomial of degree ``<= d`` with Gaussian coefficients."""
    rows = nu if rows is None else rows
    terms = {}
    for w in enumerate_words(g, d).words:
        if density < 1.0 and rng.random() > density:
            continue
        c = rng.standard_normal((rows, nu))
        if complex_coeffs:
            c = c + 1j * rng.standard_normal((rows, nu))
        terms[w] = c
    p = NCPoly(g, terms, (rows, nu))
    if hermitian:
        p = 0.5 * (p + p.adjoint())
    return p
