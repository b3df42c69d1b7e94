"""Sparse Fourier series in the angles with rational action coefficients.

A coefficient is a finite sum ``sum_D N_D(y) / prod_g (omega(y).g)^{p_g}`` where
``omega`` is the frequency map of a fixed integrable part and ``g`` ranges over
lattice generators.  Plain polynomial coefficients use the empty denominator.
Division by small divisors therefore never needs a Taylor re-expansion.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import DimensionMismatch, NonZeroMean, SupportTooLarge
from .lattice import factor_mode, is_zstar, l1, on_line
from .polynomial import YPolynomial

Mode = tuple[int, ...]
Denominator = tuple[tuple[tuple[int, ...], int], ...]
_NO_DEN: Denominator = ()

# explicit pair enumeration limit for budgeted brackets
PAIR_LIMIT = 4_000_000


# Domains and norm values


@dataclass(frozen=True)
class DomainSpec:
    """Real base set (union of balls), complex action widening ``r`` and angle strip ``s``."""

    n: int
    balls: tuple[tuple[tuple[float, ...], float], ...]
    r: float
    s: float

    def __post_init__(self):
        if not self.balls:
            raise ValueError("domain needs at least one ball")
        for center, radius in self.balls:
            if len(center) != self.n:
                raise DimensionMismatch("ball centre has wrong dimension")
            if radius <= 0:
                raise ValueError("ball radius must be positive")
        if self.r <= 0 or self.s <= 0:
            raise ValueError("r and s must be positive")

    @classmethod
    def ball(cls, center: Sequence[float], radius: float, r: float, s: float) -> "DomainSpec":
        c = tuple(float(v) for v in center)
        return cls(len(c), ((c, float(radius)),), float(r), float(s))

    def shrink(self, r: float | None = None, s: float | None = None) -> "DomainSpec":
        return DomainSpec(self.n, self.balls, self.r if r is None else float(r), self.s if s is None else float(s))

    @property
    def center(self) -> tuple[float, ...]:
        return self.balls[0][0]

    @property
    def radius(self) -> float:
        return self.balls[0][1]

    def to_json(self) -> dict:
        return {"n": self.n, "balls": [[list(c), R] for c, R in self.balls], "r": self.r, "s": self.s}


@dataclass(frozen=True)
class NormValue:
    value: float
    kind: str  # "sup" | "ellInfFourier" | "ellOneFourier"
    rigor: str  # "upperBound" | "sampledEstimate"

    def __post_init__(self):
        if not self.value >= 0:
            raise ValueError("norm values are non-negative")

    def __float__(self) -> float:
        return self.value


# Divisors


class DivisorMap:
    """Frequency map ``omega`` together with the divisors ``omega . g`` it induces."""

    def __init__(self, omega: Sequence[YPolynomial]):
        self.omega = tuple(omega)
        self.n = len(self.omega)
        self._factor: dict[Mode, YPolynomial] = {}
        self._grad: dict[Mode, tuple[YPolynomial, ...]] = {}
        self._lower: dict[tuple, float] = {}

    def __eq__(self, other):
        return isinstance(other, DivisorMap) and self.omega == other.omega

    def __hash__(self):
        return hash(self.omega)

    def factor(self, g: Mode) -> YPolynomial:
        poly = self._factor.get(g)
        if poly is None:
            poly = YPolynomial(self.n)
            for gi, wi in zip(g, self.omega):
                if gi:
                    poly = poly + wi.scale(gi)
            self._factor[g] = poly
        return poly

    def factor_gradient(self, g: Mode) -> tuple[YPolynomial, ...]:
        grad = self._grad.get(g)
        if grad is None:
            grad = self.factor(g).gradient()
            self._grad[g] = grad
        return grad

    def lower_bound(self, g: Mode, center: tuple[float, ...], radius: float) -> float:
        """Lower bound of ``|omega . g|`` on the complex ball of the given radius."""
        key = (g, center, radius)
        lb = self._lower.get(key)
        if lb is None:
            d = self.factor(g)
            value = abs(d(center))
            variation = (d - d(center)).sup_bound(center, radius)
            lb = value - variation
            self._lower[key] = lb
        return lb

    def domain_lower_bound(self, g: Mode, domain: DomainSpec) -> float:
        return min(self.lower_bound(g, c, R + domain.r) for c, R in domain.balls)

    def to_json(self) -> list:
        return [_poly_to_json(p) for p in self.omega]


def _merge_den(a: Denominator, b: Denominator) -> Denominator:
    if not a:
        return b
    if not b:
        return a
    out = dict(a)
    for g, p in b:
        out[g] = out.get(g, 0) + p
    return tuple(sorted(out.items()))


# Coefficients


class Coefficient:
    """Rational function of the actions stored as ``{denominator: numerator}``."""

    __slots__ = ("n", "_parts")

    def __init__(self, n: int, parts: Mapping[Denominator, YPolynomial] | None = None):
        self.n = n
        self._parts = {d: p for d, p in (parts or {}).items() if not p.is_zero()}

    @classmethod
    def from_polynomial(cls, poly: YPolynomial) -> "Coefficient":
        return cls(poly.n, {_NO_DEN: poly})

    @classmethod
    def constant(cls, n: int, value: complex) -> "Coefficient":
        return cls(n, {_NO_DEN: YPolynomial.constant(n, value)})

    def parts(self):
        return self._parts.items()

    def is_zero(self) -> bool:
        return not self._parts

    def is_polynomial(self) -> bool:
        return all(not d for d in self._parts)

    def polynomial(self) -> YPolynomial:
        if not self.is_polynomial():
            raise TypeError("coefficient has denominators")
        return self._parts.get(_NO_DEN, YPolynomial(self.n))

    def is_constant(self) -> bool:
        return self.is_polynomial() and self.polynomial().is_constant()

    def __eq__(self, other):
        return isinstance(other, Coefficient) and self._parts == other._parts

    def __repr__(self):
        return f"Coefficient({self._parts!r})"

    def __add__(self, other: "Coefficient") -> "Coefficient":
        out = dict(self._parts)
        for d, p in other._parts.items():
            out[d] = out[d] + p if d in out else p
        return Coefficient(self.n, out)

    def __neg__(self) -> "Coefficient":
        return Coefficient(self.n, {d: -p for d, p in self._parts.items()})

    def __sub__(self, other: "Coefficient") -> "Coefficient":
        return self + (-other)

    def scale(self, factor: complex) -> "Coefficient":
        if factor == 0:
            return Coefficient(self.n)
        return Coefficient(self.n, {d: p.scale(factor) for d, p in self._parts.items()})

    def __mul__(self, other: "Coefficient") -> "Coefficient":
        out: dict[Denominator, YPolynomial] = {}
        for d1, p1 in self._parts.items():
            for d2, p2 in other._parts.items():
                d = _merge_den(d1, d2)
                prod = p1 * p2
                out[d] = out[d] + prod if d in out else prod
        return Coefficient(self.n, out)

    def times_polynomial(self, poly: YPolynomial) -> "Coefficient":
        return Coefficient(self.n, {d: p * poly for d, p in self._parts.items()})

    def divide_by_factor(self, g: Mode, power: int = 1) -> "Coefficient":
        return Coefficient(self.n, {_merge_den(d, ((g, power),)): p for d, p in self._parts.items()})

    def conjugate(self) -> "Coefficient":
        # divisor polynomials have real coefficients
        return Coefficient(self.n, {d: p.conjugate() for d, p in self._parts.items()})

    def derivative(self, index: int, divisors: DivisorMap | None) -> "Coefficient":
        out: dict[Denominator, YPolynomial] = {}

        def put(d, p):
            if not p.is_zero():
                out[d] = out[d] + p if d in out else p

        for d, p in self._parts.items():
            put(d, p.derivative(index))
            for pos, (g, power) in enumerate(d):
                slope = divisors.factor_gradient(g)[index]
                if slope.is_zero():
                    continue
                raised = d[:pos] + ((g, power + 1),) + d[pos + 1 :]
                put(raised, (p * slope).scale(-power))
        return Coefficient(self.n, out)

    def evaluate(self, y: Sequence[complex], divisors: DivisorMap | None) -> complex:
        total = 0j
        for d, p in self._parts.items():
            val = p(y)
            for g, power in d:
                val /= divisors.factor(g)(y) ** power
            total += val
        return total

    def evaluate_many(self, points: np.ndarray, divisors: DivisorMap | None) -> np.ndarray:
        total = np.zeros(len(points), dtype=complex)
        for d, p in self._parts.items():
            val = p.evaluate_many(points)
            for g, power in d:
                val = val / divisors.factor(g).evaluate_many(points) ** power
            total += val
        return total

    def sup_bound(self, domain: DomainSpec, divisors: DivisorMap | None) -> float:
        """Upper bound of ``|c(y)|`` on the complex widening of the domain."""
        best = 0.0
        for center, R in domain.balls:
            radius = R + domain.r
            total = 0.0
            for d, p in self._parts.items():
                num = p.sup_bound(center, radius)
                if num == 0.0:
                    continue
                for g, power in d:
                    lb = divisors.lower_bound(g, center, radius)
                    if lb <= 0:
                        return math.inf
                    num /= lb**power
                total += num
            best = max(best, total)
        return best


# Fourier series


def _to_coefficient(n_actions: int, value) -> Coefficient:
    if isinstance(value, Coefficient):
        return value
    if isinstance(value, YPolynomial):
        return Coefficient.from_polynomial(value)
    return Coefficient.constant(n_actions, complex(value))


def _mode_key(k: Mode):
    return (l1(k), k)


class FourierSeries:
    """Finite Fourier series ``sum_k c_k(y) exp(i k.x)``.

    ``n`` is the number of angles and ``n_actions`` the number of actions
    (they differ only for one-angle projections).  ``reality`` marks series
    whose coefficients satisfy ``c_{-k} = conj(c_k)``.
    """

    __slots__ = ("n", "n_actions", "_coeffs", "reality", "divisors", "_cache")

    def __init__(
        self,
        n: int,
        coeffs: Mapping[Iterable[int], object] | None = None,
        reality: bool = True,
        divisors: DivisorMap | None = None,
        n_actions: int | None = None,
    ):
        self.n = n
        self.n_actions = n if n_actions is None else n_actions
        cleaned: dict[Mode, Coefficient] = {}
        for k, v in (coeffs or {}).items():
            k = tuple(int(c) for c in k)
            if len(k) != n:
                raise DimensionMismatch(f"mode {k} has wrong length")
            c = _to_coefficient(self.n_actions, v)
            if not c.is_zero():
                cleaned[k] = c
        self._coeffs = cleaned
        self.reality = reality
        if divisors is None:
            self.divisors = None
        else:
            self.divisors = divisors
        self._cache: dict = {}

    # constructors
    @classmethod
    def zero(cls, n: int, n_actions: int | None = None) -> "FourierSeries":
        return cls(n, {}, n_actions=n_actions)

    @classmethod
    def cosine(cls, k: Sequence[int], amplitude: float = 1.0, n_actions: int | None = None) -> "FourierSeries":
        """``amplitude * cos(k.x)``."""
        k = tuple(k)
        neg = tuple(-c for c in k)
        return cls(len(k), {k: amplitude / 2, neg: amplitude / 2}, n_actions=n_actions)

    @classmethod
    def sine(cls, k: Sequence[int], amplitude: float = 1.0, n_actions: int | None = None) -> "FourierSeries":
        k = tuple(k)
        neg = tuple(-c for c in k)
        return cls(len(k), {k: -0.5j * amplitude, neg: 0.5j * amplitude}, n_actions=n_actions)

    @classmethod
    def from_polynomial(cls, poly: YPolynomial) -> "FourierSeries":
        """Angle-independent series (an integrable Hamiltonian)."""
        return cls(poly.n, {(0,) * poly.n: poly})

    # inspection
    def __len__(self) -> int:
        return len(self._coeffs)

    def __iter__(self) -> Iterator[Mode]:
        return iter(self._coeffs)

    def modes(self) -> list[Mode]:
        hit = self._cache.get("modes")
        if hit is None:
            hit = sorted(self._coeffs, key=_mode_key)
            self._cache["modes"] = hit
        return list(hit)

    def items(self):
        return self._coeffs.items()

    def coefficient(self, k: Sequence[int]) -> Coefficient:
        return self._coeffs.get(tuple(k), Coefficient(self.n_actions))

    def __contains__(self, k) -> bool:
        return tuple(k) in self._coeffs

    def is_zero(self) -> bool:
        return not self._coeffs

    def coefficient_map(self) -> dict[Mode, Coefficient]:
        return dict(self._coeffs)

    def mean(self) -> Coefficient:
        return self.coefficient((0,) * self.n)

    def max_mode(self) -> int:
        return max((l1(k) for k in self._coeffs), default=0)

    def __eq__(self, other) -> bool:
        return isinstance(other, FourierSeries) and self.n == other.n and self._coeffs == other._coeffs

    def __repr__(self) -> str:
        return f"FourierSeries(n={self.n}, modes={len(self._coeffs)})"

    def _like(self, coeffs, reality=None, divisors=None) -> "FourierSeries":
        return FourierSeries(
            self.n,
            coeffs,
            reality=self.reality if reality is None else reality,
            divisors=divisors if divisors is not None else self.divisors,
            n_actions=self.n_actions,
        )

    def _combine_divisors(self, other: "FourierSeries") -> DivisorMap | None:
        if self.n != other.n or self.n_actions != other.n_actions:
            raise DimensionMismatch("series dimensions differ")
        if self.divisors is None:
            return other.divisors
        if other.divisors is None or other.divisors == self.divisors:
            return self.divisors
        raise ValueError("series use different frequency maps for their divisors")

    # linear structure
    def __add__(self, other: "FourierSeries") -> "FourierSeries":
        div = self._combine_divisors(other)
        out = dict(self._coeffs)
        for k, c in other._coeffs.items():
            out[k] = out[k] + c if k in out else c
        return FourierSeries(self.n, out, self.reality and other.reality, div, self.n_actions)

    def __neg__(self) -> "FourierSeries":
        return self._like({k: -c for k, c in self._coeffs.items()})

    def __sub__(self, other: "FourierSeries") -> "FourierSeries":
        return self + (-other)

    def scale(self, factor: float) -> "FourierSeries":
        real = self.reality and complex(factor).imag == 0
        return self._like({k: c.scale(factor) for k, c in self._coeffs.items()}, reality=real)

    def __mul__(self, other):
        if isinstance(other, (int, float, complex)):
            return self.scale(other)
        div = self._combine_divisors(other)
        out: dict[Mode, Coefficient] = {}
        for k1, c1 in self._coeffs.items():
            for k2, c2 in other._coeffs.items():
                k = tuple(a + b for a, b in zip(k1, k2))
                prod = c1 * c2
                out[k] = out[k] + prod if k in out else prod
        return _symmetrised(FourierSeries(self.n, out, self.reality and other.reality, div, self.n_actions))

    __rmul__ = __mul__

    def filter(self, keep: Callable[[Mode], bool]) -> "FourierSeries":
        return self._like({k: c for k, c in self._coeffs.items() if keep(k)})

    def conjugate_modes(self) -> "FourierSeries":
        """Series of ``conj(f)`` for real arguments: ``c_k -> conj(c_{-k})``."""
        return self._like({tuple(-a for a in k): c.conjugate() for k, c in self._coeffs.items()})

    def reality_defect(self) -> bool:
        """True when the coefficient map violates ``c_{-k} = conj(c_k)``."""
        for k, c in self._coeffs.items():
            if self.coefficient(tuple(-a for a in k)) != c.conjugate():
                return True
        return False

    # calculus
    def derivative_x(self, index: int) -> "FourierSeries":
        return self._like({k: c.scale(1j * k[index]) for k, c in self._coeffs.items() if k[index]})

    def derivative_y(self, index: int) -> "FourierSeries":
        return self._like({k: c.derivative(index, self.divisors) for k, c in self._coeffs.items()})

    # evaluation
    def evaluate(self, y: Sequence[complex], x: Sequence[complex]) -> complex:
        y = np.asarray(y, dtype=complex)
        x = np.asarray(x, dtype=complex)
        if y.shape != (self.n_actions,) or x.shape != (self.n,):
            raise DimensionMismatch("evaluation point has wrong dimension")
        total = 0j
        for k, c in self._coeffs.items():
            total += c.evaluate(y, self.divisors) * np.exp(1j * np.dot(k, x))
        return complex(total)

    def evaluate_many(self, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
        ys = np.asarray(ys, dtype=complex)
        xs = np.asarray(xs, dtype=complex)
        if ys.ndim != 2 or ys.shape[1] != self.n_actions or xs.shape != (len(ys), self.n):
            raise DimensionMismatch("evaluation points have wrong shape")
        total = np.zeros(len(ys), dtype=complex)
        for k, c in self._coeffs.items():
            total += c.evaluate_many(ys, self.divisors) * np.exp(1j * (xs @ np.asarray(k, dtype=float)))
        return total

    # bounds
    def mode_bounds(self, domain: DomainSpec) -> tuple[np.ndarray, np.ndarray]:
        """Modes (as an int array) and upper bounds of ``sup |c_k|`` on the domain."""
        key = ("bounds", domain.balls, domain.r)
        hit = self._cache.get(key)
        if hit is None:
            base = self._cache.get("constant_bounds")
            modes = self.modes()
            if base is None:
                arr = np.array(modes, dtype=np.int64).reshape(len(modes), self.n)
                varying = [i for i, k in enumerate(modes) if not self._coeffs[k].is_constant()]
                vals = np.array(
                    [abs(self._coeffs[k].polynomial().constant_term()) if self._coeffs[k].is_constant() else 0.0 for k in modes],
                    dtype=float,
                )
                base = (arr, vals, varying)
                self._cache["constant_bounds"] = base
            arr, vals, varying = base
            if varying:
                vals = vals.copy()
                for i in varying:
                    vals[i] = self._coeffs[modes[i]].sup_bound(domain, self.divisors)
            hit = (arr, vals)
            self._cache[key] = hit
        return hit

    def derivative_bounds(self, domain: DomainSpec) -> np.ndarray:
        """Upper bounds of ``sup |d c_k / d y_i|``, one row per mode."""
        key = ("dbounds", domain.balls, domain.r)
        hit = self._cache.get(key)
        if hit is None and all(c.is_constant() for c in self._coeffs.values()):
            hit = np.zeros((len(self._coeffs), self.n_actions))
            self._cache[key] = hit
        if hit is None:
            modes = self.modes()
            hit = np.zeros((len(modes), self.n_actions))
            for row, k in enumerate(modes):
                c = self._coeffs[k]
                if c.is_constant():
                    continue
                for i in range(self.n_actions):
                    hit[row, i] = c.derivative(i, self.divisors).sup_bound(domain, self.divisors)
            self._cache[key] = hit
        return hit

    # serialisation
    def to_json(self) -> dict:
        coeffs = []
        for k in self.modes():
            for den, poly in sorted(self._coeffs[k].parts(), key=lambda item: item[0]):
                entry = {"k": list(k), "poly": _poly_to_json(poly)}
                if den:
                    entry["den"] = [[list(g), p] for g, p in den]
                coeffs.append(entry)
        out = {"n": self.n, "reality": self.reality, "coeffs": coeffs}
        if self.n_actions != self.n:
            out["n_actions"] = self.n_actions
        if self.divisors is not None:
            out["divisors"] = self.divisors.to_json()
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def from_json(cls, data: Mapping) -> "FourierSeries":
        n = int(data["n"])
        n_actions = int(data.get("n_actions", n))
        divisors = None
        if "divisors" in data:
            divisors = DivisorMap([_poly_from_json(n_actions, p) for p in data["divisors"]])
        coeffs: dict[Mode, Coefficient] = {}
        for entry in data["coeffs"]:
            k = tuple(int(v) for v in entry["k"])
            den = tuple((tuple(int(v) for v in g), int(p)) for g, p in entry.get("den", []))
            part = Coefficient(n_actions, {den: _poly_from_json(n_actions, entry["poly"])})
            coeffs[k] = coeffs[k] + part if k in coeffs else part
        return cls(n, coeffs, reality=bool(data["reality"]), divisors=divisors, n_actions=n_actions)

    @classmethod
    def loads(cls, text: str) -> "FourierSeries":
        return cls.from_json(json.loads(text))


def _poly_to_json(poly: YPolynomial) -> list:
    return [
        {"deg": list(deg), "re": float(c.real), "im": float(c.imag)}
        for deg, c in sorted(poly.items(), key=lambda item: item[0])
    ]


def _poly_from_json(n: int, entries) -> YPolynomial:
    return YPolynomial(n, {tuple(int(v) for v in e["deg"]): complex(float(e["re"]), float(e["im"])) for e in entries})


def _symmetrised(series: FourierSeries) -> FourierSeries:
    """Rebuild the negative half of a real series from the positive half.

    Summation order can differ between ``k`` and ``-k``; mirroring makes the
    conjugate symmetry exact.
    """
    if not series.reality:
        return series
    out: dict[Mode, Coefficient] = {}
    for k, c in series.items():
        if not any(k):
            parts = {}
            for d, p in c.parts():
                parts[d] = YPolynomial(p.n, {deg: complex(v.real, 0.0) for deg, v in p.items()})
            out[k] = Coefficient(c.n, parts)
        elif is_zstar(k):
            out[k] = c
            out[tuple(-a for a in k)] = c.conjugate()
    for k, c in series.items():
        if any(k) and not is_zstar(k) and tuple(-a for a in k) not in out:
            out[tuple(-a for a in k)] = c.conjugate()
            out[k] = c
    return FourierSeries(series.n, out, True, series.divisors, series.n_actions)


# Norms


def _weights(modes: np.ndarray, s: float) -> np.ndarray:
    if len(modes) == 0:
        return np.zeros(0)
    return np.exp(np.abs(modes).sum(axis=1) * s)


def fourier_norm_inf(f: FourierSeries, domain: DomainSpec, s: float | None = None) -> NormValue:
    """Upper bound of ``sup_k sup_{D_r} |f_k| e^{|k|_1 s}``."""
    modes, vals = f.mode_bounds(domain)
    w = _weights(modes, domain.s if s is None else s)
    value = float(np.max(vals * w)) if len(vals) else 0.0
    return NormValue(value, "ellInfFourier", "upperBound")


def fourier_norm_l1(f: FourierSeries, domain: DomainSpec, s: float | None = None) -> NormValue:
    """Upper bound of ``sup_{D_r} sum_k |f_k| e^{|k|_1 s}`` (per-mode sups summed)."""
    modes, vals = f.mode_bounds(domain)
    w = _weights(modes, domain.s if s is None else s)
    value = float(np.sum(vals * w)) if len(vals) else 0.0
    return NormValue(value, "ellOneFourier", "upperBound")


def l1_value(f: FourierSeries, domain: DomainSpec) -> float:
    return fourier_norm_l1(f, domain).value


def boundary_samples(domain: DomainSpec, count: int = 1024, seed: int = 20240611) -> tuple[np.ndarray, np.ndarray]:
    """Quasi-random points on the boundary of ``D_r x T^n_s``.

    Actions sit on the real ball boundary plus a complex offset of length ``r``;
    every angle carries imaginary part ``+-s``.
    """
    from scipy.stats import norm, qmc

    n = domain.n
    dims = 3 * n + n + n
    sobol = qmc.Sobol(d=dims, scramble=True, seed=seed)
    u = sobol.random(count)
    u = np.clip(u, 1e-12, 1 - 1e-12)
    gauss = norm.ppf(u[:, : 3 * n])
    real_dir = gauss[:, :n]
    real_dir /= np.linalg.norm(real_dir, axis=1, keepdims=True)
    cplx = gauss[:, n : 2 * n] + 1j * gauss[:, 2 * n : 3 * n]
    cplx /= np.linalg.norm(cplx, axis=1, keepdims=True)
    theta = 2 * np.pi * u[:, 3 * n : 4 * n]
    signs = np.where(u[:, 4 * n : 5 * n] < 0.5, -1.0, 1.0)
    ys = np.empty((count, n), dtype=complex)
    for row in range(count):
        center, R = domain.balls[row % len(domain.balls)]
        ys[row] = np.asarray(center) + R * real_dir[row] + domain.r * cplx[row]
    xs = theta + 1j * domain.s * signs
    return ys, xs


def sup_norm_sampled(f: FourierSeries, domain: DomainSpec, count: int = 1024) -> NormValue:
    """Sampled estimate (a lower estimate) of ``sup |f|`` over ``D_r x T^n_s``."""
    if f.is_zero():
        return NormValue(0.0, "sup", "sampledEstimate")
    if f.n != f.n_actions:
        raise DimensionMismatch("sampling needs matching action and angle dimensions")
    ys, xs = boundary_samples(domain, count)
    vals = np.abs(f.evaluate_many(ys, xs))
    return NormValue(float(np.max(vals)), "sup", "sampledEstimate")


@dataclass(frozen=True)
class ComparisonReport:
    inf_norm: float
    sampled_sup: float
    l1_norm: float
    coth_bound: float
    power_bound: float
    links: tuple[tuple[str, bool], ...]

    @property
    def holds(self) -> bool:
        return all(ok for _, ok in self.links)


def norm_comparison_report(f: FourierSeries, domain: DomainSpec, sigma: float) -> ComparisonReport:
    """Evaluate the chain ``inf-norm <= sup <= l1-norm <= (2n/sigma)^n inf-norm(s+sigma)``.

    Upper bounds are compared with upper bounds and the sampled sup is only
    compared against an upper bound.  The first link needs exact mode sups,
    which is the case for action-independent coefficients.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    n = f.n
    inf_n = fourier_norm_inf(f, domain).value
    l1_n = fourier_norm_l1(f, domain).value
    sup_s = sup_norm_sampled(f, domain).value
    wide = fourier_norm_inf(f, domain, s=domain.s + sigma).value
    coth = (1.0 / math.tanh(sigma / 2)) ** n - 1.0
    links = [
        ("sampled sup <= l1", sup_s <= l1_n * (1 + 1e-12)),
        ("inf <= l1", inf_n <= l1_n * (1 + 1e-12)),
        ("l1 <= (coth^n - 1) inf(s+sigma)", l1_n <= coth * wide * (1 + 1e-12)),
        ("(coth^n - 1) <= (2n/sigma)^n", coth <= (2 * n / sigma) ** n),
    ]
    exact_modes = all(c.is_constant() for _, c in f.items())
    if exact_modes:
        links.insert(0, ("inf <= sampled sup", inf_n <= sup_s * (1 + 1e-9) + 1e-300))
    return ComparisonReport(inf_n, sup_s, l1_n, coth * wide, (2 * n / sigma) ** n * wide, tuple(links))


def norm_comparison_check(f: FourierSeries, domain: DomainSpec, sigma: float) -> bool:
    return norm_comparison_report(f, domain, sigma).holds


# Projectors and truncations


def project_lattice(f: FourierSeries, k: Sequence[int] | None) -> FourierSeries:
    """Keep the modes in ``Z k`` (``k=None`` keeps only the mean)."""
    if f.is_zero():
        return f
    modes = f.modes()
    mask = on_line(np.array(modes, dtype=np.int64), k)
    keep = {m for m, ok in zip(modes, mask) if ok}
    return f.filter(lambda m: m in keep)


def project_lattice_complement(f: FourierSeries, k: Sequence[int] | None) -> FourierSeries:
    if f.is_zero():
        return f
    modes = f.modes()
    mask = on_line(np.array(modes, dtype=np.int64), k)
    drop = {m for m, ok in zip(modes, mask) if ok}
    return f.filter(lambda m: m not in drop)


def truncate(f: FourierSeries, N: int) -> tuple[FourierSeries, FourierSeries]:
    """Split into modes with ``|k|_1 <= N`` and the rest."""
    if N < 0:
        raise ValueError("N must be non-negative")
    return f.filter(lambda m: l1(m) <= N), f.filter(lambda m: l1(m) > N)


def tail_bound_check(f: FourierSeries, domain: DomainSpec, N: int, sigma: float) -> tuple[float, float, bool]:
    """Compare the high-mode norm at ``s - sigma`` with ``e^{-(N+1) sigma}`` times the norm at ``s``."""
    _, high = truncate(f, N)
    lhs = fourier_norm_l1(high, domain, s=domain.s - sigma).value
    rhs = math.exp(-(N + 1) * sigma) * fourier_norm_l1(f, domain).value
    return lhs, rhs, lhs <= rhs * (1 + 1e-12)


def compress(f: FourierSeries, domain: DomainSpec, threshold: float) -> tuple[FourierSeries, float]:
    """Drop coefficient parts whose weighted sup bound is at most ``threshold``.

    Returns the reduced series and the l1-Fourier norm bound of what was dropped.
    Conjugate parts have equal bounds, so real series stay real.
    """
    if threshold <= 0 or f.is_zero():
        return f, 0.0
    dropped = 0.0
    out: dict[Mode, Coefficient] = {}
    changed = False
    for k, c in f.items():
        weight = math.exp(l1(k) * domain.s)
        kept = {}
        for d, p in c.parts():
            bound = Coefficient(c.n, {d: p}).sup_bound(domain, f.divisors) * weight
            if bound <= threshold:
                dropped += bound
                changed = True
            else:
                kept[d] = p
        if kept:
            out[k] = Coefficient(c.n, kept)
    if not changed:
        return f, 0.0
    return FourierSeries(f.n, out, f.reality, f.divisors, f.n_actions), dropped


def one_d_projection(f: FourierSeries, k: Sequence[int]) -> FourierSeries:
    """One-angle series ``F(theta) = sum_{j != 0} f_{jk} e^{i j theta}``."""
    k = tuple(k)
    out: dict[Mode, Coefficient] = {}
    kv = np.asarray(k)
    for mode, c in f.items():
        if not any(mode):
            continue
        if on_line(np.asarray(mode)[None, :], k)[0]:
            pivot = int(np.flatnonzero(kv)[0])
            out[(mode[pivot] // k[pivot],)] = c
    return FourierSeries(1, out, f.reality, f.divisors, f.n_actions)


def lift_one_d(F: FourierSeries, k: Sequence[int]) -> FourierSeries:
    """Inverse of :func:`one_d_projection`: ``F(k.x)`` as an n-angle series."""
    k = tuple(k)
    out = {tuple(j[0] * c for c in k): coeff for j, coeff in F.items()}
    return FourierSeries(len(k), out, F.reality, F.divisors, F.n_actions)


def decompose_generators(f: FourierSeries) -> dict[Mode, FourierSeries]:
    """Split a zero-mean series into one-angle pieces along generator directions."""
    if not f.mean().is_zero():
        raise NonZeroMean("decomposition needs a zero-average series")
    groups: dict[Mode, dict[Mode, Coefficient]] = {}
    for mode, c in f.items():
        j, g = factor_mode(mode)
        groups.setdefault(g, {})[(j,)] = c
    return {
        g: FourierSeries(1, groups[g], f.reality, f.divisors, f.n_actions)
        for g in sorted(groups, key=_mode_key)
    }


def reconstruct(pieces: Mapping[Mode, FourierSeries], n: int, n_actions: int | None = None) -> FourierSeries:
    total = FourierSeries.zero(n, n_actions)
    for g, F in pieces.items():
        total = total + lift_one_d(F, g)
    return total


# Poisson bracket


def _pair_coefficient(cu, cv, q, m, du, dv, n):
    """Contribution of the mode pair ``(q, m)`` to ``{u, v}`` at ``q + m``."""
    acc = None
    for i in range(n):
        if q[i] and dv is not None and dv[i] is not None:
            term = (cu * dv[i]).scale(1j * q[i])
            acc = term if acc is None else acc + term
        if m[i] and du is not None and du[i] is not None:
            term = (du[i] * cv).scale(-1j * m[i])
            acc = term if acc is None else acc + term
    return acc


def _y_derivatives(series: FourierSeries) -> dict[Mode, list | None]:
    out = {}
    for k, c in series.items():
        if c.is_constant():
            out[k] = None
            continue
        ders = []
        for i in range(series.n_actions):
            d = c.derivative(i, series.divisors)
            ders.append(None if d.is_zero() else d)
        out[k] = ders if any(d is not None for d in ders) else None
    return out


def poisson_bracket(u: FourierSeries, v: FourierSeries) -> FourierSeries:
    """``{u, v} = sum_i u_{x_i} v_{y_i} - u_{y_i} v_{x_i}`` computed exactly."""
    result, _ = bracket_with_budget(u, v)
    return result


def bracket_with_budget(
    u: FourierSeries,
    v: FourierSeries,
    domain: DomainSpec | None = None,
    keep: Callable[[np.ndarray], np.ndarray] | None = None,
    threshold: float = 0.0,
    classify: Callable[[np.ndarray], np.ndarray] | None = None,
    categories: int = 1,
) -> tuple[FourierSeries, np.ndarray]:
    """Poisson bracket with optional discarding of small or unwanted pairs.

    A mode pair ``(q, m)`` is computed explicitly when its target ``q + m``
    passes ``keep`` and its weighted bound on ``domain`` reaches ``threshold``.
    The weighted bounds of all other pairs are summed into the returned budget
    (split by ``classify`` of the target mode), which bounds the l1-Fourier norm
    of the discarded part on ``domain``.
    """
    div = u._combine_divisors(v)
    n = u.n
    budget = np.zeros(categories)
    if u.is_zero() or v.is_zero():
        return FourierSeries(n, {}, True, div, u.n_actions), budget
    du_all = _y_derivatives(u)
    dv_all = _y_derivatives(v)
    if domain is None or (keep is None and threshold <= 0):
        pairs = None
    else:
        pairs = _select_pairs(u, v, domain, keep, threshold, classify, categories, budget)
    out: dict[Mode, Coefficient] = {}
    u_items = list(u.items())
    v_items = list(v.items())
    real = u.reality and v.reality

    def add(q, cu, m, cv):
        target = tuple(a + b for a, b in zip(q, m))
        if real and any(target) and not is_zstar(target):
            return
        c = _pair_coefficient(cu, cv, q, m, du_all[q], dv_all[m], n)
        if c is not None and not c.is_zero():
            out[target] = out[target] + c if target in out else c

    if pairs is None:
        for q, cu in u_items:
            for m, cv in v_items:
                add(q, cu, m, cv)
    else:
        u_modes = u.modes()
        v_modes = v.modes()
        for a, b in pairs:
            q, m = u_modes[a], v_modes[b]
            add(q, u._coeffs[q], m, v._coeffs[m])
    series = FourierSeries(n, out, real, div, u.n_actions)
    return (_symmetrised(series) if real else series), budget


def _select_pairs(u, v, domain, keep, threshold, classify, categories, budget):
    """Return explicit ``(index_u, index_v)`` pairs and accumulate the rest into ``budget``."""
    qm, bu = u.mode_bounds(domain)
    mm, bv = v.mode_bounds(domain)
    dyu = u.derivative_bounds(domain)
    dyv = v.derivative_bounds(domain)
    s = domain.s
    wq = np.exp(np.abs(qm).sum(axis=1) * s)
    wm = np.exp(np.abs(mm).sum(axis=1) * s)
    # row factors for pair bounds P = A @ B^T + C @ D^T
    a = np.abs(qm) * bu[:, None]
    c = dyu
    b = dyv
    d = np.abs(mm) * bv[:, None]
    total_pairs = len(qm) * len(mm)
    if total_pairs > PAIR_LIMIT:
        bulk = float(((a * wq[:, None]).sum(axis=0) * (b * wm[:, None]).sum(axis=0)).sum())
        bulk += float(((c * wq[:, None]).sum(axis=0) * (d * wm[:, None]).sum(axis=0)).sum())
        if bulk <= threshold:
            budget += bulk
            return []
        raise SupportTooLarge(f"{total_pairs} mode pairs exceed the explicit limit {PAIR_LIMIT}")
    chosen = []
    chunk = max(1, PAIR_LIMIT // max(1, len(mm)) // 4)
    for start in range(0, len(qm), chunk):
        stop = min(len(qm), start + chunk)
        bound = a[start:stop] @ b.T + c[start:stop] @ d.T
        targets = qm[start:stop, None, :] + mm[None, :, :]
        weight = np.exp(np.abs(targets).sum(axis=2) * s)
        weighted = bound * weight
        flat_targets = targets.reshape(-1, qm.shape[1])
        explicit = weighted.reshape(-1) >= threshold if threshold > 0 else np.ones(weighted.size, bool)
        explicit &= weighted.reshape(-1) > 0
        if keep is not None:
            explicit &= keep(flat_targets)
        dropped = ~explicit & (weighted.reshape(-1) > 0)
        if dropped.any():
            cats = classify(flat_targets[dropped]) if classify is not None else np.zeros(dropped.sum(), int)
            budget += np.bincount(cats, weights=weighted.reshape(-1)[dropped], minlength=categories)
        idx = np.flatnonzero(explicit)
        rows = idx // len(mm) + start
        cols = idx % len(mm)
        chosen.extend(zip(rows.tolist(), cols.tolist()))
    return chosen


def bracket_norm_rhs(norm_f: float, norm_g: float, r0, s0, r, s, rho, sigma) -> float:
    """Right-hand side of the bracket estimate on the shrunk domain."""
    rbar, sbar = min(r0, r), min(s0, s)
    return (
        (1 / math.e)
        * (1 / ((r0 - rbar + rho) * (s - sbar + sigma)) + 1 / ((r - rbar + rho) * (s0 - sbar + sigma)))
        * norm_f
        * norm_g
    )


def bracket_norm_bound_check(
    f: FourierSeries, g: FourierSeries, dom_f: DomainSpec, dom_g: DomainSpec, rho: float, sigma: float
) -> tuple[float, float, bool]:
    """Compare the computed norm of ``{f, g}`` on the shrunk domain with its analytic bound."""
    rbar, sbar = min(dom_f.r, dom_g.r), min(dom_f.s, dom_g.s)
    shrunk = dom_f.shrink(r=rbar - rho, s=sbar - sigma)
    lhs = fourier_norm_l1(poisson_bracket(f, g), shrunk).value
    rhs = bracket_norm_rhs(
        fourier_norm_l1(f, dom_f).value, fourier_norm_l1(g, dom_g).value, dom_f.r, dom_f.s, dom_g.r, dom_g.s, rho, sigma
    )
    return lhs, rhs, lhs <= rhs * (1 + 1e-12)


def cauchy_estimate_check(phi: FourierSeries, domain: DomainSpec, rho: float, sigma: float) -> dict:
    """Check both derivative estimates for ``phi`` on ``D_r x T_s``.

    ``sum_i l1(d phi/d x_i)`` at ``s - sigma`` against ``l1(phi)/(e sigma)`` and
    ``max_i l1(d phi/d y_i)`` at ``r - rho`` against ``l1(phi)/rho``.
    """
    norm_phi = fourier_norm_l1(phi, domain).value
    narrow = domain.shrink(s=domain.s - sigma)
    lhs_x = sum(fourier_norm_l1(phi.derivative_x(i), narrow).value for i in range(phi.n))
    rhs_x = norm_phi / (math.e * sigma)
    thin = domain.shrink(r=domain.r - rho)
    lhs_y = max((fourier_norm_l1(phi.derivative_y(i), thin).value for i in range(phi.n_actions)), default=0.0)
    rhs_y = norm_phi / rho
    ok = lhs_x <= rhs_x * (1 + 1e-12) and lhs_y <= rhs_y * (1 + 1e-12)
    return {"x": (lhs_x, rhs_x), "y": (lhs_y, rhs_y), "holds": ok}
