"""Non-degeneracy classes of potentials, their tail functions and measure statements."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import gamma as gamma_fn

from .fourier import FourierSeries
from .lattice import enumerate_modes, generators_up_to, is_zstar, l1
from .polynomial import YPolynomial

_E = math.e


# Tail functions


@dataclass(frozen=True)
class TailFunction:
    """A non-increasing, non-negative map ``delta -> tau(delta)`` on ``(0, 1]``."""

    kind: str
    params: dict
    evaluator: Callable[[float], float] = field(compare=False, repr=False)

    def __call__(self, delta: float) -> float:
        return float(self.evaluator(delta))

    def is_monotone(self, grid: Sequence[float] | None = None) -> bool:
        grid = sorted(grid if grid is not None else np.geomspace(1e-6, 1.0, 61))
        values = [self(d) for d in grid]
        return all(v >= 0 for v in values) and all(a >= b - 1e-12 * abs(a) for a, b in zip(values, values[1:]))

    def to_json(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}


def tail_tau0(delta: float, gamma: float, s: float, n: int) -> float:
    return 4 / s * math.log(_E + 2**9 / (s**n * gamma * delta))


def tail_taustar_terms(delta: float, gamma: float, mu: float, s: float, n: int) -> list[float]:
    """The four candidates whose maximum defines the tail for y-dependent potentials (before the prefactor)."""
    st = min(s, 1.0)
    lead = 2**6 * n**2 / st
    big = math.log(30 * _E**3 / (delta * mu))
    return [
        math.log(lead) ** 3,
        big * math.log(4 / st * big) ** 2,
        math.log(30 * _E**3 / mu) * math.log(1 / delta),
        math.log(2**10 / (delta * gamma)),
    ]


def tail_taustar(delta: float, gamma: float, mu: float, s: float, n: int) -> float:
    st = min(s, 1.0)
    return 2**6 * n**2 / st * max(tail_taustar_terms(delta, gamma, mu, s, n))


def tau0_function(gamma: float, s: float, n: int) -> TailFunction:
    return TailFunction("tau0", {"gamma": gamma, "s": s, "n": n}, lambda d: tail_tau0(d, gamma, s, n))


def taustar_function(gamma: float, mu: float, s: float, n: int) -> TailFunction:
    return TailFunction("tauStar", {"gamma": gamma, "mu": mu, "s": s, "n": n}, lambda d: tail_taustar(d, gamma, mu, s, n))


def constant_tail(value: float = 0.0) -> TailFunction:
    return TailFunction("custom", {"value": value}, lambda d: value)


# Class membership


@dataclass(frozen=True)
class ClassParams:
    s: float
    n: int
    delta: float
    tail: TailFunction
    mode_cutoff: int

    def __post_init__(self):
        if not 0 < self.delta <= 1:
            raise ValueError("delta must lie in (0, 1]")
        if self.s <= 0:
            raise ValueError("s must be positive")

    def threshold(self) -> float:
        return self.tail(self.delta)

    def active_generators(self) -> list[tuple[int, ...]]:
        tau = self.threshold()
        if self.mode_cutoff < 1:
            return []
        return [g for g in generators_up_to(self.n, self.mode_cutoff) if l1(g) > tau]


@dataclass(frozen=True)
class Membership:
    member: bool
    witness: tuple[int, ...] | None
    vacuous: bool
    checked: int

    def __bool__(self) -> bool:
        return self.member


def _coefficient_modulus(f: FourierSeries, k, y0) -> float:
    if k not in f:
        return 0.0
    c = f.coefficient(k)
    if c.is_constant():
        return abs(c.evaluate([0.0] * c.n, f.divisors))
    if y0 is None:
        raise ValueError("y-dependent coefficients need an evaluation point y0")
    return abs(c.evaluate(list(y0), f.divisors))


def in_class(f: FourierSeries, p: ClassParams, y0: Sequence[float] | None = None) -> Membership:
    """Check ``|f_k| >= delta |k|_1^-n e^{-|k|_1 s}`` on generators with ``tau(delta) < |k|_1 <= cutoff``."""
    if f.n != p.n:
        raise ValueError("dimension mismatch between series and class parameters")
    gens = p.active_generators()
    for g in gens:
        m = l1(g)
        if _coefficient_modulus(f, g, y0) < p.delta * m ** (-p.n) * math.exp(-m * p.s):
            return Membership(False, g, False, len(gens))
    return Membership(True, None, not gens, len(gens))


# The product measure on the unit ball


def ball_modes(n: int, cutoff: int) -> list[tuple[int, ...]]:
    """Modes carrying an independent coordinate: ``k != 0`` with first non-zero entry positive."""
    return [k for k in enumerate_modes(n, cutoff) if any(k) and is_zstar(k)]


def draw_disk(rng: np.random.Generator, shape) -> np.ndarray:
    """Uniform samples of the closed complex unit disk."""
    radius = np.sqrt(rng.uniform(size=shape))
    angle = rng.uniform(0.0, 2 * np.pi, size=shape)
    return radius * np.exp(1j * angle)


def sample_unit_ball(s: float, n: int, mode_cutoff: int, seed: int) -> FourierSeries:
    """One draw of the product measure truncated to ``|k|_1 <= mode_cutoff``."""
    modes = ball_modes(n, mode_cutoff)
    z = draw_disk(np.random.default_rng(seed), len(modes))
    coeffs = {}
    for k, zk in zip(modes, z):
        c = complex(zk) * math.exp(-l1(k) * s)
        coeffs[k] = c
        coeffs[tuple(-v for v in k)] = c.conjugate()
    return FourierSeries(n, coeffs)


def write_jsonl(series: Sequence[FourierSeries]) -> str:
    return "".join(f.dumps() + "\n" for f in series)


def read_jsonl(text: str) -> list[FourierSeries]:
    return [FourierSeries.loads(line) for line in text.splitlines() if line.strip()]


@dataclass(frozen=True)
class MeasureReport:
    fraction_inside: float
    fraction_outside: float
    bound_outside: float
    sigma: float
    samples: int
    active: int
    vacuous: bool

    @property
    def passed(self) -> bool:
        return self.fraction_outside <= self.bound_outside + 3 * self.sigma

    def to_json(self) -> dict:
        return {
            "fractionInside": self.fraction_inside,
            "fractionOutside": self.fraction_outside,
            "boundOutside": self.bound_outside,
            "sigma": self.sigma,
            "samples": self.samples,
            "activeGenerators": self.active,
            "vacuous": self.vacuous,
            "passed": self.passed,
        }


def class_defect_sum(p: ClassParams) -> float:
    """``delta^2 sum |k|_1^{-2n}`` over the active generators: the union bound for the excluded mass."""
    return p.delta**2 * sum(l1(g) ** (-2 * p.n) for g in p.active_generators())


def empirical_measure(p: ClassParams, N: int, seed: int) -> MeasureReport:
    """Monte-Carlo mass of the class inside the truncated unit ball.

    Only the coordinates of active generators matter, and ``|f_k| e^{|k|_1 s} = |z_k|``, so
    membership is decided on the coordinates directly.
    """
    modes = ball_modes(p.n, max(p.mode_cutoff, 1))
    rng = np.random.default_rng(seed)
    z = draw_disk(rng, (N, len(modes)))
    active = set(p.active_generators())
    cols = [i for i, k in enumerate(modes) if k in active]
    if cols:
        need = np.array([p.delta * l1(modes[i]) ** (-p.n) for i in cols])
        inside = np.all(np.abs(z[:, cols]) >= need[None, :], axis=1)
    else:
        inside = np.ones(N, dtype=bool)
    frac = float(inside.mean())
    sigma = math.sqrt(max(frac * (1 - frac), 0.0) / N)
    return MeasureReport(frac, 1 - frac, class_defect_sum(p), sigma, N, len(cols), not cols)


# Cartan-type bad sets for y-dependent coefficients


def sphere_measure(n: int) -> float:
    """Surface measure of the unit sphere in ``R^n``."""
    return 2 * math.pi ** (n / 2) / float(gamma_fn(n / 2))


def ball_volume(n: int, radius: float) -> float:
    return sphere_measure(n) / n * radius**n


@dataclass(frozen=True)
class CartanParams:
    r: float
    mu: float
    y0: tuple[float, ...]
    delta: float

    def b(self, k: Sequence[int]) -> float:
        return float(np.linalg.norm(k)) ** (-len(k) / 2)

    def delta_hat(self, k: Sequence[int]) -> float:
        return self.delta / l1(k) ** len(k)

    def threshold(self, k: Sequence[int]) -> float:
        dh = self.delta_hat(k)
        return dh * (self.mu * self.b(k) / (30 * _E**3)) ** math.log(1 / dh)


@dataclass(frozen=True)
class CartanReport:
    measure_estimate: float
    bound: float
    sigma: float
    thresholds: dict
    bad_fraction: float
    samples: int

    @property
    def passed(self) -> bool:
        return self.measure_estimate <= self.bound + 3 * self.sigma

    def to_json(self) -> dict:
        return {
            "measureEstimate": self.measure_estimate,
            "bound": self.bound,
            "sigma": self.sigma,
            "badFraction": self.bad_fraction,
            "samples": self.samples,
            "thresholds": {",".join(map(str, k)): v for k, v in self.thresholds.items()},
            "passed": self.passed,
        }


def cartan_bad_set(
    fk_polys: Sequence[tuple[Sequence[int], YPolynomial]],
    cp: CartanParams,
    N: int,
    seed: int,
) -> CartanReport:
    """Monte-Carlo measure of ``{y in B_{r/2e}(y0) : some |g_k(y)| < delta_k(mu)}`` against the Cartan bound."""
    n = len(cp.y0)
    thresholds = {}
    for k, g in fk_polys:
        k = tuple(int(c) for c in k)
        if len(k) != n or g.n != n:
            raise ValueError("dimension mismatch in Cartan data")
        if g.sup_bound(cp.y0, cp.r) > 1 + 1e-12:
            raise ValueError(f"normalization violated: sup |g_{k}| may exceed 1 on the ball")
        if abs(g(cp.y0)) < cp.delta_hat(k) * (1 - 1e-12):
            raise ValueError(f"normalization violated: |g_{k}(y0)| below delta_hat")
        thresholds[k] = cp.threshold(k)
    rho = cp.r / (2 * _E)
    rng = np.random.default_rng(seed)
    direction = rng.normal(size=(N, n))
    direction /= np.linalg.norm(direction, axis=1)[:, None]
    pts = np.asarray(cp.y0)[None, :] + rho * rng.uniform(size=(N, 1)) ** (1 / n) * direction
    bad = np.zeros(N, dtype=bool)
    for k, g in fk_polys:
        k = tuple(int(c) for c in k)
        bad |= np.abs(g.evaluate_many(pts)) < thresholds[k]
    vol = ball_volume(n, rho)
    frac = float(bad.mean())
    sigma = vol * math.sqrt(max(frac * (1 - frac), 0.0) / N)
    b_total = sum(cp.b(k) for k in thresholds)
    bound = 0.5 * sphere_measure(n) * b_total * rho**n * cp.mu
    return CartanReport(frac * vol, bound, sigma, thresholds, frac, N)


def counterexample_family(n: int, r: float, cutoff: int) -> list[tuple[tuple[int, ...], YPolynomial]]:
    """Normalized coefficients ``g_k(y) = (|k|_1^{-n} - y_1/r)/2`` of the degenerate y-dependent potential."""
    out = []
    for k in generators_up_to(n, cutoff):
        g = YPolynomial(n, {(0,) * n: 0.5 * l1(k) ** (-n), tuple(1 if i == 0 else 0 for i in range(n)): -0.5 / r})
        out.append((k, g))
    return out


def counterexample_potential(n: int, r: float, s: float, cutoff: int) -> FourierSeries:
    """``(1/2) sum_k (|k|_1^{-n} - y_1/r) e^{-|k|_1 s} e^{i k.x}`` truncated to ``|k|_1 <= cutoff``."""
    coeffs = {}
    for k in enumerate_modes(n, cutoff):
        if not any(k):
            continue
        w = 0.5 * math.exp(-l1(k) * s)
        coeffs[k] = YPolynomial(n, {(0,) * n: w * l1(k) ** (-n), tuple(1 if i == 0 else 0 for i in range(n)): -w / r})
    return FourierSeries(n, coeffs)


# Hypothesis gate of the y-dependent statement


@dataclass(frozen=True)
class GateTerm:
    name: str
    value: float
    limit: float
    passed: bool

    def to_json(self) -> dict:
        return {"name": self.name, "value": self.value, "limit": self.limit, "passed": self.passed}


@dataclass(frozen=True)
class GateReport:
    terms: list
    kappa: float
    mu_tilde: float
    n_tilde: float

    @property
    def passed(self) -> bool:
        return all(t.passed for t in self.terms)

    def required_K2(self) -> float:
        return max((t.value for t in self.terms if t.name.startswith("K2 >=")), default=0.0)

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "kappa": self.kappa,
            "muTilde": self.mu_tilde,
            "nTilde": self.n_tilde,
            "terms": [t.to_json() for t in self.terms],
        }


@dataclass(frozen=True)
class GateParams:
    n: int
    s: float
    L: float
    nu: float
    K1: int
    K2: int
    delta: float
    gamma: float
    mu: float


def action_dependent_constants(n: int, s: float, L: float, nu: float, mu: float) -> tuple[float, float, float]:
    """``(mu_tilde, n_tilde, kappa)``."""
    return mu / (30 * _E**3), 2 * nu - 2 * n - 3, 2 ** (2 * n + 10) * n ** (2 * n) * L / s ** (2 * n + 1)


def _safe_exp(x: float) -> float:
    return math.exp(x) if x < 709 else math.inf


def action_dependent_gate(p: GateParams) -> GateReport:
    """Every hypothesis inequality of the y-dependent averaging statement, term by term."""
    mu_t, n_t, kappa = action_dependent_constants(p.n, p.s, p.L, p.nu, p.mu)
    small = math.exp(-8)
    terms = [
        GateTerm("mu < e^-8", p.mu, small, 0 < p.mu < small),
        GateTerm("delta < e^-8", p.delta, small, 0 < p.delta < small),
        GateTerm("gamma < 1", p.gamma, 1.0, 0 < p.gamma < 1),
        GateTerm("K2 >= 3 K1 >= 6", p.K2, 3 * p.K1, p.K2 >= 3 * p.K1 >= 6),
        GateTerm("nu >= n + 2", p.nu, p.n + 2, p.nu >= p.n + 2),
    ]
    if n_t <= 0:
        terms.append(GateTerm("n_tilde > 0", n_t, 0.0, False))
        return GateReport(terms, kappa, mu_t, n_t)
    lnK1 = math.log(p.K1)
    requirements = [
        ("K2 >= K1^(2n^2 ln K1 / n_tilde)", _safe_exp(2 * p.n**2 / n_t * lnK1 * lnK1)),
        ("K2 >= K1^(9 ln(1/(delta mu_tilde)) / n_tilde)", _safe_exp(9 / n_t * math.log(1 / (p.delta * mu_t)) * lnK1)),
        ("K2 >= exp(4 ln(1/delta) ln(1/mu_tilde) / n_tilde)", _safe_exp(4 / n_t * math.log(1 / p.delta) * math.log(1 / mu_t))),
        ("K2 >= (4 e^(s+5) kappa / (delta gamma))^(4/n_tilde)", (4 * _E ** (p.s + 5) * kappa / (p.delta * p.gamma)) ** (4 / n_t)),
        ("K2 >= 2^5 ln^2(1/(delta mu)) / s", 2**5 / p.s * math.log(1 / (p.delta * p.mu)) ** 2),
        ("K2 >= 2^14 n^4 / s^2", 2**14 * p.n**4 / p.s**2),
    ]
    terms += [GateTerm(name, value, float(p.K2), p.K2 >= value) for name, value in requirements]
    return GateReport(terms, kappa, mu_t, n_t)
