"""Sparse complex polynomials in the action variables."""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Iterable, Mapping

import numpy as np

Monomial = tuple[int, ...]


def _prune(terms: Mapping[Monomial, complex]) -> dict[Monomial, complex]:
    return {deg: complex(c) for deg, c in terms.items() if c != 0}


class YPolynomial:
    """Polynomial ``sum_beta c_beta y^beta`` with complex coefficients.

    Instances are immutable; every arithmetic operation returns a new
    polynomial whose exact-zero coefficients have been dropped.
    """

    __slots__ = ("n", "_terms", "_hash")

    def __init__(self, n: int, terms: Mapping[Monomial, complex] | None = None):
        if n < 1:
            raise ValueError("dimension must be positive")
        self.n = n
        cleaned = _prune(terms or {})
        for deg in cleaned:
            if len(deg) != n or any(d < 0 for d in deg):
                raise ValueError(f"bad multidegree {deg} for dimension {n}")
        self._terms = cleaned
        self._hash = None

    # construction helpers
    @classmethod
    def constant(cls, n: int, value: complex) -> "YPolynomial":
        return cls(n, {(0,) * n: value})

    @classmethod
    def variable(cls, n: int, index: int) -> "YPolynomial":
        deg = [0] * n
        deg[index] = 1
        return cls(n, {tuple(deg): 1.0})

    @classmethod
    def zero(cls, n: int) -> "YPolynomial":
        return cls(n)

    # inspection
    @property
    def terms(self) -> dict[Monomial, complex]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def is_zero(self) -> bool:
        return not self._terms

    def is_constant(self) -> bool:
        return all(not any(deg) for deg in self._terms)

    def constant_term(self) -> complex:
        return self._terms.get((0,) * self.n, 0j)

    def degree(self) -> int:
        return max((sum(deg) for deg in self._terms), default=0)

    def __len__(self) -> int:
        return len(self._terms)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, YPolynomial):
            return NotImplemented
        return self.n == other.n and self._terms == other._terms

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.n, frozenset(self._terms.items())))
        return self._hash

    def __repr__(self) -> str:
        return f"YPolynomial(n={self.n}, terms={self._terms!r})"

    # arithmetic
    def _check(self, other: "YPolynomial") -> None:
        if other.n != self.n:
            raise ValueError("dimension mismatch")

    def __add__(self, other):
        if isinstance(other, (int, float, complex)):
            other = YPolynomial.constant(self.n, other)
        self._check(other)
        out = dict(self._terms)
        for deg, c in other._terms.items():
            out[deg] = out.get(deg, 0j) + c
        return YPolynomial(self.n, out)

    __radd__ = __add__

    def __neg__(self) -> "YPolynomial":
        return YPolynomial(self.n, {d: -c for d, c in self._terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, factor: complex) -> "YPolynomial":
        if factor == 0:
            return YPolynomial(self.n)
        return YPolynomial(self.n, {d: c * factor for d, c in self._terms.items()})

    def __mul__(self, other):
        if isinstance(other, (int, float, complex)):
            return self.scale(other)
        self._check(other)
        out: dict[Monomial, complex] = {}
        for d1, c1 in self._terms.items():
            for d2, c2 in other._terms.items():
                deg = tuple(a + b for a, b in zip(d1, d2))
                out[deg] = out.get(deg, 0j) + c1 * c2
        return YPolynomial(self.n, out)

    __rmul__ = __mul__

    def conjugate(self) -> "YPolynomial":
        return YPolynomial(self.n, {d: c.conjugate() for d, c in self._terms.items()})

    def derivative(self, index: int) -> "YPolynomial":
        out = {}
        for deg, c in self._terms.items():
            if deg[index]:
                lowered = list(deg)
                lowered[index] -= 1
                out[tuple(lowered)] = c * deg[index]
        return YPolynomial(self.n, out)

    def gradient(self) -> tuple["YPolynomial", ...]:
        return tuple(self.derivative(i) for i in range(self.n))

    # evaluation
    def __call__(self, y: Iterable[complex]) -> complex:
        y = np.asarray(y, dtype=complex)
        if y.shape != (self.n,):
            raise ValueError("dimension mismatch")
        total = 0j
        for deg, c in self._terms.items():
            total += c * np.prod(y ** np.asarray(deg))
        return complex(total)

    def evaluate_many(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at each row of ``points`` (shape ``(N, n)``)."""
        pts = np.asarray(points, dtype=complex)
        out = np.zeros(pts.shape[0], dtype=complex)
        for deg, c in self._terms.items():
            out += c * np.prod(pts ** np.asarray(deg), axis=1)
        return out

    def shift(self, center: Iterable[float]) -> "YPolynomial":
        """Return ``q`` with ``q(z) = p(center + z)``."""
        center = tuple(complex(c) for c in center)
        return _shift_cached(self, center)

    def sup_bound(self, center: Iterable[float], radius: float) -> float:
        """Upper bound of ``|p|`` on the complex ball ``|y - center| <= radius``.

        After re-centring, each monomial ``z^beta`` is bounded by its exact
        maximum on the Euclidean ball, ``radius^|beta| prod (beta_i/|beta|)^(beta_i/2)``.
        """
        return _sup_bound_cached(self, tuple(float(c) for c in center), float(radius))


def monomial_ball_max(deg: Monomial, radius: float) -> float:
    total = sum(deg)
    if total == 0:
        return 1.0
    value = radius**total
    for b in deg:
        if b:
            value *= (b / total) ** (b / 2)
    return value


@lru_cache(maxsize=200_000)
def _shift_cached(poly: YPolynomial, center: tuple[complex, ...]) -> YPolynomial:
    if all(c == 0 for c in center) or poly.is_constant():
        return poly
    out: dict[Monomial, complex] = {}
    for deg, coeff in poly.items():
        # expand prod (c_i + z_i)^{b_i}
        partial: dict[Monomial, complex] = {(): coeff}
        for i, b in enumerate(deg):
            nxt: dict[Monomial, complex] = {}
            for head, val in partial.items():
                for g in range(b + 1):
                    factor = math.comb(b, g) * center[i] ** (b - g)
                    if factor == 0:
                        continue
                    key = head + (g,)
                    nxt[key] = nxt.get(key, 0j) + val * factor
            partial = nxt
        for key, val in partial.items():
            out[key] = out.get(key, 0j) + val
    return YPolynomial(poly.n, out)


@lru_cache(maxsize=200_000)
def _sup_bound_cached(poly: YPolynomial, center: tuple[float, ...], radius: float) -> float:
    if poly.is_constant():
        return abs(poly.constant_term())
    shifted = poly.shift(center)
    return float(sum(abs(c) * monomial_ball_max(deg, radius) for deg, c in shifted.items()))


def quadratic_form(matrix: np.ndarray, linear: np.ndarray | None = None) -> YPolynomial:
    """``y.A.y/2 + b.y`` as a polynomial (handy for integrable parts)."""
    a = np.asarray(matrix, dtype=float)
    n = a.shape[0]
    terms: dict[Monomial, complex] = {}
    for i in range(n):
        for j in range(n):
            deg = [0] * n
            deg[i] += 1
            deg[j] += 1
            key = tuple(deg)
            terms[key] = terms.get(key, 0j) + 0.5 * a[i, j]
    if linear is not None:
        for i, b in enumerate(np.asarray(linear, dtype=float)):
            deg = [0] * n
            deg[i] = 1
            terms[tuple(deg)] = terms.get(tuple(deg), 0j) + b
    return YPolynomial(n, terms)
