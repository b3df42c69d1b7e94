"""Integer-lattice helpers: generators, mode factoring and Bezout completion."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache, reduce
from typing import Iterable, Sequence

import numpy as np

Vector = tuple[int, ...]


def as_vector(k: Iterable[int]) -> Vector:
    out = tuple(int(c) for c in k)
    if not out:
        raise ValueError("empty integer vector")
    return out


def l1(k: Sequence[int]) -> int:
    return sum(abs(c) for c in k)


def vector_gcd(k: Iterable[int]) -> int:
    return reduce(math.gcd, (abs(int(c)) for c in k), 0)


def is_zstar(k: Iterable[int]) -> bool:
    """True when the first non-zero component is positive."""
    for c in k:
        if c:
            return c > 0
    raise ValueError("the zero vector has no sign")


def is_generator(k: Iterable[int]) -> bool:
    k = as_vector(k)
    return any(k) and is_zstar(k) and vector_gcd(k) == 1


def factor_mode(k: Iterable[int]) -> tuple[int, Vector]:
    """Write a non-zero ``k`` as ``j * g`` with ``g`` a generator."""
    k = as_vector(k)
    d = vector_gcd(k)
    if d == 0:
        raise ValueError("the zero mode has no generator")
    g = tuple(c // d for c in k)
    if not is_zstar(g):
        return -d, tuple(-c for c in g)
    return d, g


def enumerate_modes(n: int, K: int) -> list[Vector]:
    """All integer vectors with ``|k|_1 <= K`` ordered by ``(|k|_1, k)``."""
    modes = [v for v in itertools.product(range(-K, K + 1), repeat=n) if l1(v) <= K]
    modes.sort(key=lambda v: (l1(v), v))
    return modes


@lru_cache(maxsize=64)
def _generators_cached(n: int, K: int) -> tuple[Vector, ...]:
    return tuple(v for v in enumerate_modes(n, K) if any(v) and is_zstar(v) and vector_gcd(v) == 1)


def generators_up_to(n: int, K: int) -> list[Vector]:
    """Generators of maximal one-dimensional lattices with ``|k|_1 <= K``."""
    if n < 1 or K < 1:
        raise ValueError("need n >= 1 and K >= 1")
    return list(_generators_cached(n, K))


def on_line(modes: np.ndarray, k: Sequence[int] | None) -> np.ndarray:
    """Vectorised membership of rows of ``modes`` in ``Z k`` (``k=None`` means ``{0}``)."""
    modes = np.asarray(modes, dtype=np.int64)
    if modes.ndim == 1:
        modes = modes[None, :]
    if k is None:
        return ~np.any(modes, axis=1)
    kv = np.asarray(k, dtype=np.int64)
    pivot = int(np.flatnonzero(kv)[0])
    j = modes[:, pivot] // kv[pivot]
    exact = modes[:, pivot] == j * kv[pivot]
    return exact & np.all(modes == j[:, None] * kv[None, :], axis=1)


def in_lattice(mode: Sequence[int], k: Sequence[int] | None) -> bool:
    return bool(on_line(np.asarray(mode)[None, :], k)[0])


# Bezout completion


def bezout_pair(a: int, b: int) -> tuple[int, int, int]:
    """Return ``(x, y, d)`` with ``a x + b y = d = gcd(a, b)``.

    Among all solutions ``|x|`` is minimised, then ``|y|``; remaining ties
    prefer ``y >= 0``.
    """
    if a == 0 and b == 0:
        raise ValueError("gcd of two zeros is undefined")
    d = math.gcd(a, b)
    # extended Euclid on absolute values
    old_r, r = abs(a), abs(b)
    old_s, s = 1, 0
    old_t, t = 0, 1
    while r:
        q = old_r // r
        old_r, r = r, old_r - q * r
        old_s, s = s, old_s - q * s
        old_t, t = t, old_t - q * t
    x0 = old_s * (1 if a >= 0 else -1)
    y0 = old_t * (1 if b >= 0 else -1)
    # all solutions: (x0 + t b/d, y0 - t a/d)
    step_x, step_y = b // d, -(a // d)
    if step_x == 0:
        base = math.floor(-y0 / step_y)
    else:
        base = math.floor(-x0 / step_x)
    candidates = [(x0 + t * step_x, y0 + t * step_y) for t in range(base - 1, base + 3)]
    x, y = min(candidates, key=lambda p: (abs(p[0]), abs(p[1]), p[1] < 0))
    return x, y, d


@lru_cache(maxsize=100_000)
def _bezout_matrix_cached(k: Vector) -> tuple[Vector, ...]:
    n = len(k)
    if n == 1:
        return (k,)
    if not any(k[:-1]):
        # k = (0, ..., 0, k_n): identity rows, first one flipped if needed
        rows = [tuple(1 if j == i else 0 for j in range(n)) for i in range(n - 1)]
        if k[-1] < 0:
            rows[0] = tuple(-c for c in rows[0])
        return tuple(rows) + (k,)
    if n == 2:
        x, y, _ = bezout_pair(k[0], k[1])
        return ((y, -x), k)
    head = k[:-1]
    d_head = vector_gcd(head)
    sub = _bezout_matrix_cached(head)
    x, y, _ = bezout_pair(d_head, k[-1])
    sign = -1 if n % 2 else 1  # (-1)^n
    top = tuple(sign * y * c // d_head for c in head) + (-sign * x,)
    middle = tuple(row + (0,) for row in sub[:-1])
    return (top,) + middle + (k,)


def bezout_matrix(k: Iterable[int]) -> np.ndarray:
    """Integer matrix with last row ``k``, determinant ``gcd(k)`` and sup-norm ``|k|_inf``."""
    k = as_vector(k)
    if not any(k):
        raise ValueError("k must be non-zero")
    return np.array(_bezout_matrix_cached(k), dtype=np.int64)


def integer_det(a: np.ndarray) -> int:
    """Exact determinant of a small integer matrix (fraction-free elimination)."""
    m = [[int(v) for v in row] for row in np.asarray(a)]
    n = len(m)
    sign, prev = 1, 1
    for i in range(n - 1):
        if m[i][i] == 0:
            swap = next((r for r in range(i + 1, n) if m[r][i] != 0), None)
            if swap is None:
                return 0
            m[i], m[swap] = m[swap], m[i]
            sign = -sign
        for r in range(i + 1, n):
            for c in range(i + 1, n):
                m[r][c] = (m[r][c] * m[i][i] - m[r][i] * m[i][c]) // prev
        prev = m[i][i]
    return sign * m[n - 1][n - 1]


def integer_inverse(a: np.ndarray) -> np.ndarray:
    """Inverse of a unimodular integer matrix, computed in exact rationals."""
    n = a.shape[0]
    aug = [[Fraction(int(v)) for v in row] + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(a)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if pivot is None:
            raise ValueError("singular matrix")
        aug[col], aug[pivot] = aug[pivot], aug[col]
        pv = aug[col][col]
        aug[col] = [v / pv for v in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [v - f * w for v, w in zip(aug[r], aug[col])]
    inv = [row[n:] for row in aug]
    if any(v.denominator != 1 for row in inv for v in row):
        raise ValueError("matrix is not unimodular")
    return np.array([[int(v) for v in row] for row in inv], dtype=np.int64)


@dataclass(frozen=True)
class UnimodularFrame:
    """Bezout completion of a generator and the symplectic frame it induces.

    Actions transform as ``y = A^T Y`` and angles as ``X = A x`` so that the
    last new angle is the resonant combination ``k . x``.
    """

    k: Vector
    matrix: tuple[Vector, ...]
    inverse: tuple[Vector, ...]

    @property
    def A(self) -> np.ndarray:
        return np.array(self.matrix, dtype=np.int64)

    @property
    def A_inv(self) -> np.ndarray:
        return np.array(self.inverse, dtype=np.int64)

    def angles_to_frame(self, x: np.ndarray) -> np.ndarray:
        return self.A @ np.asarray(x, dtype=float)

    def angles_from_frame(self, big_x: np.ndarray) -> np.ndarray:
        return self.A_inv @ np.asarray(big_x, dtype=float)

    def actions_from_frame(self, big_y: np.ndarray) -> np.ndarray:
        return self.A.T @ np.asarray(big_y, dtype=float)

    def actions_to_frame(self, y: np.ndarray) -> np.ndarray:
        return self.A_inv.T @ np.asarray(y, dtype=float)

    def to_json(self) -> dict:
        return {"k": list(self.k), "A": [list(r) for r in self.matrix], "A_inv": [list(r) for r in self.inverse]}


def resonance_frame(k: Iterable[int]) -> UnimodularFrame:
    k = as_vector(k)
    if vector_gcd(k) != 1:
        raise ValueError("resonance frames need gcd(k) = 1")
    a = bezout_matrix(k)
    inv = integer_inverse(a)
    return UnimodularFrame(k, tuple(map(tuple, a.tolist())), tuple(map(tuple, inv.tolist())))
