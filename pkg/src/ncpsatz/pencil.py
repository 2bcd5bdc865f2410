"""Linear pencils, free spectrahedra and the constructions built on them."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .ncpoly import NCPoly, check_tuple

log = logging.getLogger(__name__)

HERM_TOL = 1e-12
HERM_REJECT = 1e-8


def _hermitize(A, name):
    A = np.array(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be square")
    dev = float(np.max(np.abs(A - A.conj().T))) if A.size else 0.0
    if dev > HERM_REJECT:
        raise ValueError(f"{name} is not hermitian (deviation {dev:.2e})")
    if dev > HERM_TOL:
        warnings.warn(f"{name} symmetrized (deviation {dev:.2e})", stacklevel=3)
    return 0.5 * (A + A.conj().T)


@dataclass(frozen=True)
class LinearPencil:
    """``L(x) = A_0 + sum_j A_j x_j`` with a declared block-diagonal structure.

    Parameters
    ----------
    coeffs : sequence of arrays
        ``A_0, ..., A_g``, hermitian ``mu x mu``.
    blocks : sequence of (offset, size), optional
        Declared invariant blocks. Defaults to a single block.
    center : sequence of float, optional
        A point ``c`` with ``L(c) > 0``. Monic pencils use the origin.
    """

    coeffs: tuple = field(repr=False)
    blocks: tuple = ()
    center: tuple | None = None

    def __post_init__(self):
        cs = tuple(_hermitize(A, f"A_{j}") for j, A in enumerate(self.coeffs))
        if len(cs) < 2:
            raise ValueError("a pencil needs A_0 and at least one variable")
        mu = cs[0].shape[0]
        for j, A in enumerate(cs):
            if A.shape != (mu, mu):
                raise ValueError(f"A_{j} has shape {A.shape}, expected {(mu, mu)}")
        blocks = tuple((int(o), int(s)) for o, s in self.blocks) or ((0, mu),)
        pos = 0
        for o, s in blocks:
            if o != pos or s < 1:
                raise ValueError("blocks must tile the diagonal in order")
            pos += s
        if pos != mu:
            raise ValueError("blocks do not cover the pencil")
        mask = np.zeros((mu, mu), dtype=bool)
        for o, s in blocks:
            mask[o:o + s, o:o + s] = True
        for j, A in enumerate(cs):
            if np.any(A[~mask] != 0):
                raise ValueError(f"A_{j} has entries outside the declared blocks")
        object.__setattr__(self, "coeffs", cs)
        object.__setattr__(self, "blocks", blocks)
        if self.center is not None:
            object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def g(self) -> int:
        return len(self.coeffs) - 1

    @property
    def mu(self) -> int:
        return self.coeffs[0].shape[0]

    @property
    def is_monic(self) -> bool:
        return bool(np.array_equal(self.coeffs[0], np.eye(self.mu)))

    @property
    def is_real(self) -> bool:
        return all(not np.any(A.imag) for A in self.coeffs)

    def block_coeffs(self, k: int) -> list:
        o, s = self.blocks[k]
        return [A[o:o + s, o:o + s] for A in self.coeffs]

    def block_poly(self, k: int) -> NCPoly:
        """The block ``L_k`` as a polynomial with ``mu_k x mu_k`` coefficients."""
        cs = self.block_coeffs(k)
        terms = {(): cs[0]}
        for j in range(1, self.g + 1):
            terms[(j,)] = cs[j]
        return NCPoly(self.g, terms, cs[0].shape)

    def as_poly(self) -> NCPoly:
        terms = {(): self.coeffs[0]}
        for j in range(1, self.g + 1):
            terms[(j,)] = self.coeffs[j]
        return NCPoly(self.g, terms, (self.mu, self.mu))

    def evaluate(self, X) -> np.ndarray:
        return evaluate_pencil(self, X)

    def min_eig(self, X) -> float:
        return float(np.linalg.eigvalsh(evaluate_pencil(self, X))[0])

    def contains(self, X, tol: float = 1e-8) -> bool:
        return membership(self, X, tol)

    def center_point(self) -> np.ndarray:
        if self.center is not None:
            return np.asarray(self.center, dtype=float)
        if self.is_monic:
            return np.zeros(self.g)
        raise ValueError("pencil is not monic and has no declared interior point")

    def to_json(self) -> dict:
        return {
            "g": self.g,
            "mu": self.mu,
            "coeffs": [{"re": A.real.tolist(), "im": A.imag.tolist()} for A in self.coeffs],
            "blocks": [list(b) for b in self.blocks],
            **({"center": list(self.center)} if self.center is not None else {}),
        }

    @classmethod
    def from_json(cls, data: dict) -> "LinearPencil":
        g, mu = int(data["g"]), int(data["mu"])
        coeffs = []
        for k, c in enumerate(data["coeffs"]):
            re = np.asarray(c["re"], dtype=float)
            im = np.asarray(c.get("im", np.zeros_like(re)), dtype=float)
            if re.shape != (mu, mu) or im.shape != (mu, mu):
                raise ValueError(f"coeffs[{k}]: expected a {mu}x{mu} grid")
            coeffs.append(re + 1j * im)
        if len(coeffs) != g + 1:
            raise ValueError(f"expected {g + 1} coefficients, got {len(coeffs)}")
        return cls(tuple(coeffs), tuple(map(tuple, data.get("blocks", []))), data.get("center"))


def evaluate_pencil(L: LinearPencil, X) -> np.ndarray:
    """``L(X) = A_0 kron I + sum_j A_j kron X_j``."""
    X = check_tuple(X, L.g)
    for x in X:
        if np.max(np.abs(x - x.conj().T)) > 1e-10 * max(1.0, np.max(np.abs(x))):
            raise ValueError("pencil evaluation needs hermitian matrices")
    ell = X[0].shape[0]
    out = np.kron(L.coeffs[0], np.eye(ell))
    for A, x in zip(L.coeffs[1:], X):
        out = out + np.kron(A, x)
    return 0.5 * (out + out.conj().T)


def membership(L: LinearPencil, X, tol: float = 1e-8) -> bool:
    return L.min_eig(X) >= -tol


@dataclass(frozen=True)
class AffineChange:
    """Change of variables ``x -> T x + b``."""

    T: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        T = np.atleast_2d(np.asarray(self.T, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if T.shape[0] != T.shape[1] or b.shape != (T.shape[0],):
            raise ValueError("T must be square and b must match it")
        cond = np.linalg.cond(T)
        if not np.isfinite(cond) or cond > 1e14:
            raise ValueError("T is not invertible")
        log.debug("affine change cond(T)=%.3e", cond)
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "b", b)

    def inverse(self) -> "AffineChange":
        Ti = np.linalg.inv(self.T)
        return AffineChange(Ti, -Ti @ self.b)


def substitute(L: LinearPencil, ch: AffineChange) -> LinearPencil:
    """Return ``x -> L(T x + b)`` without any monicity requirement."""
    if ch.T.shape[0] != L.g:
        raise ValueError("change of variables has the wrong size")
    A0 = L.coeffs[0] + sum(bj * A for bj, A in zip(ch.b, L.coeffs[1:]))
    lin = [sum(ch.T[j, k] * L.coeffs[j + 1] for j in range(L.g)) for k in range(L.g)]
    return LinearPencil((A0, *lin), L.blocks)


def monicize(L: LinearPencil, ch: AffineChange, tol: float = 1e-10) -> LinearPencil:
    """Substitute ``x -> T x + b`` and check that the constant term becomes the identity."""
    S = substitute(L, ch)
    if np.max(np.abs(S.coeffs[0] - np.eye(S.mu))) > tol:
        raise ValueError("not monicizable at (T, b): constant term is not the identity")
    return LinearPencil((np.eye(S.mu), *S.coeffs[1:]), S.blocks)


def povm_letters(ns) -> dict:
    """Map ``(i, j)`` (1-based factor, outcome ``j < n_i``) to the pencil letter."""
    out, k = {}, 0
    for i, n in enumerate(ns, start=1):
        for j in range(1, n):
            k += 1
            out[(i, j)] = k
    return out


def build_povm_pencil(ns) -> LinearPencil:
    """Direct sum over factors of ``n_i`` times the ``n_i``-outcome POVM pencil.

    Factor ``i`` contributes scalar blocks ``n_i y_{i,j}`` for ``j < n_i``
    and ``n_i (1 - sum_j y_{i,j})``.
    """
    ns = [int(n) for n in ns]
    if not ns or any(n < 2 for n in ns):
        raise ValueError("every factor order must be at least 2")
    letters = povm_letters(ns)
    g, mu = len(letters), sum(ns)
    coeffs = [np.zeros((mu, mu)) for _ in range(g + 1)]
    off = 0
    for i, n in enumerate(ns, start=1):
        last = off + n - 1
        coeffs[0][last, last] = n
        for j in range(1, n):
            k = letters[(i, j)]
            coeffs[k][off + j - 1, off + j - 1] = n
            coeffs[k][last, last] = -n
        off += n
    center = [1.0 / n for n in ns for _ in range(n - 1)]
    return LinearPencil(tuple(coeffs), tuple((k, 1) for k in range(mu)), tuple(center))


def povm_monic_change(ns) -> AffineChange:
    """The change ``y = x + 1/n_i`` that makes the POVM pencil monic."""
    b = np.array([1.0 / n for n in ns for _ in range(n - 1)])
    return AffineChange(np.eye(len(b)), b)


def augment_bounded(L: LinearPencil, n: float) -> LinearPencil:
    """Append blocks ``I + (1/n) S_j x_j`` that force ``|X_j| <= n``."""
    if not L.is_monic:
        raise ValueError("augmentation needs a monic pencil")
    if n <= 0:
        raise ValueError("n must be positive")
    g, mu = L.g, L.mu
    size = mu + 2 * g
    coeffs = [np.eye(size, dtype=complex)]
    for j in range(1, g + 1):
        A = np.zeros((size, size), dtype=complex)
        A[:mu, :mu] = L.coeffs[j]
        r = mu + 2 * (j - 1)
        A[r, r + 1] = A[r + 1, r] = 1.0 / n
        coeffs.append(A)
    blocks = L.blocks + tuple((mu + 2 * j, 2) for j in range(g))
    return LinearPencil(tuple(coeffs), blocks)


def random_hermitian(rng, ell: int, real: bool = False) -> np.ndarray:
    G = rng.standard_normal((ell, ell))
    if not real:
        G = G + 1j * rng.standard_normal((ell, ell))
    return (G + G.conj().T) / (2.0 * np.sqrt(ell))


def random_monic_pencil(rng, g: int, block_sizes=(2,), real: bool = False, scale: float = 1.0) -> LinearPencil:
    """Monic pencil with random hermitian blocks."""
    mu = sum(block_sizes)
    coeffs = [np.eye(mu, dtype=complex)]
    for _ in range(g):
        A = np.zeros((mu, mu), dtype=complex)
        off = 0
        for s in block_sizes:
            A[off:off + s, off:off + s] = scale * random_hermitian(rng, s, real) * np.sqrt(s)
            off += s
        coeffs.append(A)
    blocks, off = [], 0
    for s in block_sizes:
        blocks.append((off, s))
        off += s
    return LinearPencil(tuple(coeffs), tuple(blocks))


def sample_point(L: LinearPencil, ell: int, seed=None, margin: float = 1e-6, radius: float = 3.0,
                 real: bool = False, max_tries: int = 1000, interior: bool = False) -> list:
    """Random hermitian tuple in the free spectrahedron of ``L``.

    A random direction ``D`` of random length is drawn and the point
    ``c + t D`` (``c`` the pencil's interior point) is pulled back along
    the ray by bisection until the smallest eigenvalue of the pencil is at
    least ``margin``. Half of the draws return the boundary point found by
    the bisection, the rest a random point on the segment. With
    ``interior=True`` the point is additionally shrunk towards ``c`` by a
    factor in ``[0.3, 0.8]``.
    """
    rng = np.random.default_rng(seed)
    c = L.center_point()
    if L.min_eig([ci * np.eye(ell) for ci in c]) < margin:
        raise ValueError("declared interior point is not strictly inside")

    def point(t, D):
        return [ci * np.eye(ell) + t * Dj for ci, Dj in zip(c, D)]

    for _ in range(max_tries):
        D = [random_hermitian(rng, ell, real) for _ in range(L.g)]
        D = [radius * rng.random() * Dj for Dj in D]
        if L.min_eig(point(1.0, D)) >= margin:
            t = 1.0
        else:
            lo, hi = 0.0, 1.0
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if L.min_eig(point(mid, D)) >= margin:
                    lo = mid
                else:
                    hi = mid
            t = lo
        if rng.random() < 0.5:
            t *= rng.uniform(0.3, 1.0)
        if interior:
            t *= rng.uniform(0.3, 0.8)
        X = point(t, D)
        if np.isfinite(t) and L.min_eig(X) >= margin:
            return X
    raise RuntimeError("could not sample a point of the spectrahedron")
