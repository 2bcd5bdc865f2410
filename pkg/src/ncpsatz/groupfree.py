"""Group algebras of free products of finite cyclic groups.

Elements of ``Z_{n_1} * ... * Z_{n_m}`` are reduced words: tuples of
syllables ``(i, r)`` with a 1-based factor index ``i``, an exponent
``1 <= r < n_i`` and no two adjacent syllables from the same factor.

The map ``omega_map`` sends a group polynomial to a polynomial in the
POVM letters ``y_{i,j}`` (``j < n_i``, numbered as in
:func:`ncpsatz.pencil.povm_letters`); ``split_map`` substitutes the
spectral projections back and satisfies ``split_map(omega_map(p)) == p``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .ncpoly import NCPoly, word_key
from .pencil import povm_letters

GroupWord = tuple


def root_of_unity(n: int, k: int) -> complex:
    """``exp(2 pi i k / n)`` with exact zeros in the real or imaginary part where they belong."""
    k %= n
    v = np.exp(2j * np.pi * k / n)
    re = 0.0 if (4 * k) % n == 0 and (4 * k // n) % 2 == 1 else v.real
    im = 0.0 if (2 * k) % n == 0 else v.imag
    return complex(re, im)


@dataclass(frozen=True)
class FreeProductSignature:
    ns: tuple

    def __post_init__(self):
        ns = tuple(int(n) for n in self.ns)
        if not ns:
            raise ValueError("signature needs at least one factor")
        if any(n < 2 for n in ns):
            raise ValueError("every factor order must be at least 2")
        object.__setattr__(self, "ns", ns)

    @property
    def m(self) -> int:
        return len(self.ns)

    @property
    def num_letters(self) -> int:
        """Number of POVM letters ``sum (n_i - 1)``."""
        return sum(n - 1 for n in self.ns)

    def n(self, i: int) -> int:
        return self.ns[i - 1]

    def omega(self, i: int, k: int = 1) -> complex:
        """``omega_i^k``."""
        return root_of_unity(self.ns[i - 1], k)

    def letters(self) -> dict:
        return povm_letters(self.ns)


def signature(ns) -> FreeProductSignature:
    if isinstance(ns, FreeProductSignature):
        return ns
    return FreeProductSignature(tuple(ns))


def reduce_word(syllables, sig: FreeProductSignature) -> GroupWord:
    """Reduced form: merge adjacent syllables of one factor, exponents mod ``n_i``."""
    stack = []
    for i, r in syllables:
        i = int(i)
        if not 1 <= i <= sig.m:
            raise ValueError(f"factor index {i} out of range 1..{sig.m}")
        r = int(r) % sig.n(i)
        if r == 0:
            continue
        if stack and stack[-1][0] == i:
            r = (stack.pop()[1] + r) % sig.n(i)
            if r == 0:
                continue
        stack.append((i, r))
    return tuple(stack)


def word_multiply(u: GroupWord, v: GroupWord, sig: FreeProductSignature) -> GroupWord:
    return reduce_word(u + v, sig)


def word_inverse(w: GroupWord, sig: FreeProductSignature) -> GroupWord:
    return tuple((i, (-r) % sig.n(i)) for i, r in reversed(w))


def extent(w: GroupWord) -> int:
    return len(w)


def group_word_key(w: GroupWord):
    return (len(w), w)


class GroupPoly:
    """``sum_w P_w w`` over the group algebra with matrix coefficients.

    Coefficients may be rectangular; hermitian polynomials are square.
    """

    __slots__ = ("sig", "shape", "terms")
    __array_ufunc__ = None

    def __init__(self, sig, terms: Mapping | None = None, shape=None):
        self.sig = signature(sig)
        clean = {}
        for w, c in (terms or {}).items():
            w = reduce_word(w, self.sig)
            a = np.asarray(c, dtype=complex)
            if a.ndim == 0:
                a = a * np.eye(shape[0] if shape is not None else 1, dtype=complex)
            if shape is None:
                shape = a.shape
            if a.shape != tuple(shape):
                raise ValueError(f"coefficient of {w} has shape {a.shape}, expected {tuple(shape)}")
            a = clean[w] + a if w in clean else a.copy()
            if np.any(a != 0):
                clean[w] = a
            else:
                clean.pop(w, None)
        self.shape = tuple(shape) if shape is not None else (1, 1)
        self.terms = clean

    @classmethod
    def zero(cls, sig, shape=(1, 1)):
        return cls(sig, {}, shape)

    @classmethod
    def constant(cls, sig, c=1.0, nu=1):
        a = np.asarray(c, dtype=complex)
        if a.ndim == 0:
            a = a * np.eye(nu, dtype=complex)
        return cls(sig, {(): a}, a.shape)

    @classmethod
    def generator(cls, sig, i: int, r: int = 1, nu: int = 1):
        return cls(sig, {((i, r),): np.eye(nu)}, (nu, nu))

    @property
    def nu(self) -> int:
        return self.shape[1]

    @property
    def extent(self) -> int:
        return max((len(w) for w in self.terms), default=-1)

    def words(self) -> list:
        return sorted(self.terms, key=group_word_key)

    def items(self):
        return [(w, self.terms[w]) for w in self.words()]

    def coefficient(self, w) -> np.ndarray:
        w = reduce_word(w, self.sig)
        return self.terms.get(w, np.zeros(self.shape, dtype=complex))

    def _check(self, other):
        if self.sig != other.sig:
            raise ValueError("signature mismatch")

    def __add__(self, other):
        if not isinstance(other, GroupPoly):
            other = GroupPoly.constant(self.sig, other, self.shape[0])
        self._check(other)
        if self.shape != other.shape:
            raise ValueError("coefficient shapes differ")
        out = dict(self.terms)
        for w, c in other.terms.items():
            out[w] = out[w] + c if w in out else c
        return GroupPoly(self.sig, out, self.shape)

    __radd__ = __add__

    def __neg__(self):
        return GroupPoly(self.sig, {w: -c for w, c in self.terms.items()}, self.shape)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, GroupPoly):
            return group_multiply(self, other)
        return GroupPoly(self.sig, {w: other * c for w, c in self.terms.items()}, self.shape)

    def __rmul__(self, other):
        return GroupPoly(self.sig, {w: other * c for w, c in self.terms.items()}, self.shape)

    def adjoint(self) -> "GroupPoly":
        return group_adjoint(self)

    def left_matmul(self, A) -> "GroupPoly":
        A = np.asarray(A, dtype=complex)
        return GroupPoly(self.sig, {w: A @ c for w, c in self.terms.items()}, (A.shape[0], self.shape[1]))

    def is_hermitian(self, tol: float = 0.0) -> bool:
        if self.shape[0] != self.shape[1]:
            return False
        return (self - self.adjoint()).max_abs() <= tol

    def max_abs(self) -> float:
        return max((float(np.max(np.abs(c))) for c in self.terms.values()), default=0.0)

    def prune(self, eps: float = 1e-14) -> "GroupPoly":
        return GroupPoly(self.sig, {w: c for w, c in self.terms.items() if np.max(np.abs(c)) > eps}, self.shape)

    def __repr__(self):
        return f"GroupPoly(ns={self.sig.ns}, shape={self.shape}, terms={len(self.terms)})"

    def to_json(self) -> dict:
        return {
            "factors": list(self.sig.ns),
            "coeff_dim": self.shape[1],
            "rows": self.shape[0],
            "terms": [{"word": [[i, r] for i, r in w], "re": c.real.tolist(), "im": c.imag.tolist()}
                      for w, c in self.items()],
        }

    @classmethod
    def from_json(cls, data: dict) -> "GroupPoly":
        sig = FreeProductSignature(tuple(data["factors"]))
        nu = int(data["coeff_dim"])
        rows = int(data.get("rows", nu))
        terms = {}
        for t in data["terms"]:
            re = np.asarray(t["re"], dtype=float).reshape(rows, nu)
            im = np.asarray(t.get("im", np.zeros((rows, nu))), dtype=float).reshape(rows, nu)
            w = tuple((int(i), int(r)) for i, r in t["word"])
            c = re + 1j * im
            terms[w] = terms[w] + c if w in terms else c
        return cls(sig, terms, (rows, nu))


def group_multiply(p: GroupPoly, q: GroupPoly) -> GroupPoly:
    p._check(q)
    if p.shape[1] != q.shape[0]:
        raise ValueError(f"cannot multiply coefficients {p.shape} and {q.shape}")
    out = {}
    for u, a in p.terms.items():
        for v, b in q.terms.items():
            w = word_multiply(u, v, p.sig)
            c = a @ b
            out[w] = out[w] + c if w in out else c
    return GroupPoly(p.sig, out, (p.shape[0], q.shape[1]))


def group_adjoint(p: GroupPoly) -> GroupPoly:
    return GroupPoly(p.sig, {word_inverse(w, p.sig): c.conj().T for w, c in p.terms.items()},
                     (p.shape[1], p.shape[0]))


def projection(sig, i: int, k: int) -> GroupPoly:
    """``(1/n) sum_t omega^{-t k} x_i^t``, the projection onto the ``omega^k`` eigenspace of ``x_i``."""
    sig = signature(sig)
    n = sig.n(i)
    return GroupPoly(sig, {((i, t),): sig.omega(i, -t * k) / n for t in range(n)}, (1, 1))


def spectral_projections(n: int) -> list:
    """``q_1, ..., q_n`` in the group algebra of ``Z_n``."""
    sig = FreeProductSignature((n,))
    return [projection(sig, 1, k) for k in range(1, n + 1)]


def _scale(f: NCPoly, c) -> NCPoly:
    """Kronecker-scale a scalar polynomial by a coefficient matrix."""
    c = np.asarray(c, dtype=complex)
    return NCPoly(f.g, {w: a[0, 0] * c for w, a in f.terms.items()}, c.shape)


def omega_map(p: GroupPoly) -> NCPoly:
    """Image of ``p`` under ``x_i^r -> 1 + sum_k (omega_i^{rk} - 1) y_{i,k}``, applied syllable-wise."""
    sig = p.sig
    letters = sig.letters()
    g = len(letters)
    cache = {(): NCPoly.constant(g, 1.0)}

    def syllable(i, r):
        terms = {(): 1.0}
        for k in range(1, sig.n(i)):
            terms[(letters[(i, k)],)] = sig.omega(i, r * k) - 1.0
        return NCPoly(g, terms, (1, 1))

    def image(w):
        if w not in cache:
            cache[w] = image(w[:-1]) * syllable(*w[-1])
        return cache[w]

    out = NCPoly.zero(g, p.shape)
    for w, c in p.terms.items():
        out = out + _scale(image(w), c)
    return out


def split_map(f: NCPoly, sig) -> GroupPoly:
    """Substitute ``y_{i,j} -> projection(i, j)`` and reduce."""
    sig = signature(sig)
    letters = sig.letters()
    if f.g != len(letters):
        raise ValueError(f"polynomial has {f.g} letters, signature needs {len(letters)}")
    inv = {k: ij for ij, k in letters.items()}
    proj = {k: projection(sig, *ij) for k, ij in inv.items()}
    cache = {(): GroupPoly.constant(sig, 1.0)}

    def image(w):
        if w not in cache:
            cache[w] = image(w[:-1]) * proj[w[-1]]
        return cache[w]

    out = {}
    for w in sorted(f.terms, key=word_key):
        c = f.terms[w]
        for gw, a in image(w).terms.items():
            v = a[0, 0] * c
            out[gw] = out[gw] + v if gw in out else v
    return GroupPoly(sig, out, f.shape)


@dataclass
class UnitaryTuple:
    sig: FreeProductSignature
    U: list

    def __post_init__(self):
        self.sig = signature(self.sig)
        self.U = [np.asarray(u, dtype=complex) for u in self.U]
        if len(self.U) != self.sig.m:
            raise ValueError("one unitary per factor is required")

    @property
    def dim(self) -> int:
        return self.U[0].shape[0]

    def defect(self) -> float:
        """Largest of ``||U^* U - I||`` and ``||U^{n_i} - I||`` over the factors."""
        I = np.eye(self.dim)
        out = 0.0
        for i, u in enumerate(self.U, start=1):
            out = max(out, np.linalg.norm(u.conj().T @ u - I, 2),
                      np.linalg.norm(np.linalg.matrix_power(u, self.sig.n(i)) - I, 2))
        return float(out)

    def check(self, tol: float = 1e-10) -> bool:
        return self.defect() <= tol


@dataclass
class PovmTuple:
    """Per factor ``i`` the operators ``E_{i,1..n_i-1}``; the last outcome is ``I - sum_j E_{i,j}``."""

    sig: FreeProductSignature
    E: list

    def __post_init__(self):
        self.sig = signature(self.sig)
        self.E = [[np.asarray(e, dtype=complex) for e in Ei] for Ei in self.E]
        if len(self.E) != self.sig.m or any(len(Ei) != n - 1 for Ei, n in zip(self.E, self.sig.ns)):
            raise ValueError("need n_i - 1 operators for every factor")

    @classmethod
    def from_letters(cls, sig, Y) -> "PovmTuple":
        sig = signature(sig)
        letters = sig.letters()
        return cls(sig, [[Y[letters[(i, j)] - 1] for j in range(1, n)] for i, n in enumerate(sig.ns, start=1)])

    @property
    def dim(self) -> int:
        return self.E[0][0].shape[0]

    def letters(self) -> list:
        return [e for Ei in self.E for e in Ei]

    def complete(self, i: int) -> list:
        Ei = self.E[i - 1]
        return list(Ei) + [np.eye(self.dim) - sum(Ei)]

    def margin(self) -> float:
        """Smallest eigenvalue over all outcomes, including the completing one."""
        out = np.inf
        for i in range(1, self.sig.m + 1):
            for e in self.complete(i):
                out = min(out, float(np.linalg.eigvalsh(0.5 * (e + e.conj().T))[0]))
        return out

    def check(self, tol: float = 1e-10) -> bool:
        return self.margin() >= -tol


def word_matrix(w: GroupWord, U: UnitaryTuple, cache: dict | None = None) -> np.ndarray:
    if cache is None:
        cache = {}
    if w in cache:
        return cache[w]
    if not w:
        out = np.eye(U.dim, dtype=complex)
    else:
        i, r = w[-1]
        out = word_matrix(w[:-1], U, cache) @ np.linalg.matrix_power(U.U[i - 1], r)
    cache[w] = out
    return out


def evaluate_group(p: GroupPoly, U: UnitaryTuple) -> np.ndarray:
    """``sum_w P_w (x) U^w``."""
    if U.sig != p.sig:
        raise ValueError("signature mismatch")
    cache = {}
    ell = U.dim
    out = np.zeros((p.shape[0] * ell, p.shape[1] * ell), dtype=complex)
    for w, c in p.terms.items():
        out += np.kron(c, word_matrix(w, U, cache))
    return out


def _random_unitary(rng, ell: int) -> np.ndarray:
    Z = rng.standard_normal((ell, ell)) + 1j * rng.standard_normal((ell, ell))
    Q, R = np.linalg.qr(Z)
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def sample_unitary_tuple(sig, ell: int, seed=None) -> UnitaryTuple:
    """Unitaries ``Q diag(omega^k) Q^*`` with random bases and random eigenvalue multiplicities."""
    sig = signature(sig)
    rng = np.random.default_rng(seed)
    U = []
    for i, n in enumerate(sig.ns, start=1):
        Q = _random_unitary(rng, ell)
        ks = rng.integers(0, n, size=ell)
        U.append((Q * np.array([sig.omega(i, k) for k in ks])) @ Q.conj().T)
    return UnitaryTuple(sig, U)


def sample_povm_tuple(sig, ell: int, seed=None) -> PovmTuple:
    """Random complete POVMs ``S^{-1/2} A_k S^{-1/2}`` with ``S = sum_k A_k``."""
    sig = signature(sig)
    rng = np.random.default_rng(seed)
    E = []
    for n in sig.ns:
        A = []
        for _ in range(n):
            rank = int(rng.integers(1, ell + 1))
            B = rng.standard_normal((ell, rank)) + 1j * rng.standard_normal((ell, rank))
            A.append(B @ B.conj().T)
        w, V = np.linalg.eigh(sum(A))
        isq = (V / np.sqrt(w)) @ V.conj().T
        E.append([isq @ a @ isq for a in A[:-1]])
    return PovmTuple(sig, E)


def _psd_sqrt(A) -> np.ndarray:
    w, V = np.linalg.eigh(0.5 * (A + A.conj().T))
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.conj().T


def naimark_dilate(E: PovmTuple, tol: float = 1e-8):
    """Unitary tuple ``U`` and isometry ``V`` with ``V^* p_{i,j}(U) V = E_{i,j}``.

    Factors are dilated in ascending order. Dilating factor ``i`` by
    ``W h = sum_k e_k (x) F_k^{1/2} h`` maps its outcomes to coordinate
    projections; already dilated unitaries are extended by ``W U W^* +
    (I - W W^*)`` and the remaining POVMs by putting the complement on
    their last outcome. Returns ``(UnitaryTuple, V)``.
    """
    sig = E.sig
    margin = E.margin()
    if margin < -tol:
        raise ValueError(f"POVM is indefinite beyond tolerance: margin {margin:.3e}")
    ell = E.dim
    V = np.eye(ell, dtype=complex)
    pending = [E.complete(i) for i in range(1, sig.m + 1)]
    done = []
    for i in range(1, sig.m + 1):
        F = pending[i - 1]
        n = sig.n(i)
        D = F[0].shape[0]
        W = np.vstack([_psd_sqrt(f) for f in F])
        # orthonormalize columns to absorb clamping errors
        Uw, _, Vh = np.linalg.svd(W, full_matrices=False)
        W = Uw @ Vh
        comp = np.eye(n * D) - W @ W.conj().T
        done = [W @ u @ W.conj().T + comp for u in done]
        # outcome k (k = 1..n) sits on diagonal block k-1 with eigenvalue omega^k
        done.append(np.kron(np.diag([sig.omega(i, k) for k in range(1, n + 1)]), np.eye(D)))
        for j in range(i, sig.m):
            G = pending[j]
            lifted = [W @ f @ W.conj().T for f in G]
            lifted[-1] = lifted[-1] + comp
            pending[j] = lifted
        V = W @ V
    return UnitaryTuple(sig, done), V


def omega_at(p: GroupPoly, E: PovmTuple) -> np.ndarray:
    """``Omega(p)`` evaluated at the POVM letters of ``E``."""
    return omega_map(p).evaluate(E.letters())


def random_group_poly(rng, sig, ext: int, nu: int = 1, rows=None, n_terms: int | None = None,
                      hermitian: bool = False) -> GroupPoly:
    """Random polynomial supported on reduced words of extent ``<= ext``."""
    sig = signature(sig)
    words = reduced_words(sig, ext)
    rows = nu if rows is None else rows
    if n_terms is not None and n_terms < len(words):
        idx = rng.choice(len(words), size=n_terms, replace=False)
        words = [words[k] for k in sorted(idx)]
    terms = {w: rng.standard_normal((rows, nu)) + 1j * rng.standard_normal((rows, nu)) for w in words}
    p = GroupPoly(sig, terms, (rows, nu))
    if hermitian:
        p = 0.5 * (p + p.adjoint())
    return p


def reduced_words(sig, ext: int) -> list:
    """All reduced words of extent ``<= ext`` ordered by extent, then lexicographically."""
    sig = signature(sig)
    out = [()]
    layer = [()]
    for _ in range(ext):
        nxt = []
        for w in layer:
            for i, n in enumerate(sig.ns, start=1):
                if w and w[-1][0] == i:
                    continue
                for r in range(1, n):
                    nxt.append(w + ((i, r),))
        out.extend(nxt)
        layer = nxt
    return sorted(out, key=group_word_key)
