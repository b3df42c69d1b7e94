"""Iterated averaging with explicit series plus certified norm budgets.

Each averaging step keeps the perturbation as an explicit Fourier series ``E``
together with a :class:`Budget` bounding the l1-Fourier norm of everything that
was not carried explicitly (pruned bracket pairs, truncated Lie tails and words
involving the part of the generator solving for that residue).  The budget is
split by where the omitted terms may live: ``low`` may contain non-lattice modes
of order at most ``K`` and is averaged away by an implicit generator at the next
step, ``high`` only contains lattice modes or modes beyond ``K``.
An optional :class:`AnalyticTail` describes an untouched high-mode piece of the
original perturbation whose norm is known in closed form at every strip width.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DivisorTooSmall, SmallnessViolated
from .fourier import (
    DivisorMap,
    DomainSpec,
    FourierSeries,
    bracket_norm_rhs,
    bracket_with_budget,
    compress,
    fourier_norm_l1,
    poisson_bracket,
    project_lattice,
    project_lattice_complement,
    truncate,
)
from .lattice import factor_mode, generators_up_to, l1, on_line
from .polynomial import YPolynomial
from .serialize import format_float

TAIL_TOL_REL = 1e-12
PRUNE_REL = 1e-20
SQUEEZE_REL = 1e-15
LIE_ORDER_CAP = 20
_E = math.e


# Small helpers


def integrable_part(h: FourierSeries | YPolynomial) -> YPolynomial:
    if isinstance(h, YPolynomial):
        return h
    if any(any(k) for k in h):
        raise ValueError("the integrable part must not depend on the angles")
    return h.mean().polynomial()


def divisor_map(h: FourierSeries | YPolynomial) -> DivisorMap:
    return DivisorMap(integrable_part(h).gradient())


def _with_divisors(f: FourierSeries, divisors: DivisorMap) -> FourierSeries:
    if f.divisors is not None and f.divisors != divisors:
        raise ValueError("series already refers to another frequency map")
    return FourierSeries(f.n, f.coefficient_map(), f.reality, divisors, f.n_actions)


def _l1(f: FourierSeries, domain: DomainSpec, s: float | None = None) -> float:
    return fourier_norm_l1(f, domain, s=s).value


def in_lattice_mask(modes: np.ndarray, k: Sequence[int] | None) -> np.ndarray:
    return on_line(modes, k)


def split_flat(f: FourierSeries, k: Sequence[int] | None, K: int) -> tuple[FourierSeries, FourierSeries]:
    """Return ``(f_flat, f_K)`` with ``f_K`` the non-lattice modes of order at most ``K``."""
    if f.is_zero():
        return f, f
    modes = f.modes()
    arr = np.array(modes, dtype=np.int64)
    lat = on_line(arr, k)
    low = np.abs(arr).sum(axis=1) <= K
    chosen = {m for m, a, b in zip(modes, lat, low) if (not a) and b}
    if not chosen:
        return f, FourierSeries(f.n, {}, f.reality, f.divisors, f.n_actions)
    return f.filter(lambda m: m not in chosen), f.filter(lambda m: m in chosen)


def _diff_norm(a: FourierSeries, b: FourierSeries, domain: DomainSpec) -> float:
    return 0.0 if a is b else _l1(a - b, domain)


def certified_alpha(divisors: DivisorMap, domain: DomainSpec, k: Sequence[int] | None, K: int) -> float:
    """Lower bound of ``|omega(y).m|`` over the complex domain for ``m`` outside the lattice, ``|m|_1 <= K``.

    Every such ``m`` is ``j g`` with ``g`` a generator outside the lattice, so the
    minimum over generators is enough.
    """
    gens = generators_up_to(domain.n, K)
    arr = np.array(gens, dtype=np.int64)
    outside = ~on_line(arr, k)
    return min(divisors.domain_lower_bound(g, domain) for g, keep in zip(gens, outside) if keep)


# Analytic tail of a positional potential


def _shell_count_bound(n: int, m: int) -> int:
    """Number of integer vectors with ``|k|_1 = m``."""
    return sum(2**j * math.comb(n, j) * math.comb(m - 1, j - 1) for j in range(1, min(n, m) + 1))


@dataclass(frozen=True)
class AnalyticTail:
    """High-mode remainder ``sum_{|k|_1 > cutoff} c_k e^{i k.x}`` known through ``|c_k| <= amp |k|_1^{-n} e^{-|k|_1 s0}``.

    Only angle-dependent, so the action widening is irrelevant for its norm.
    """

    n: int
    cutoff: int
    amplitude: float
    decay: float

    def norm(self, s_eval: float) -> float:
        """Upper bound of the l1-Fourier norm at strip width ``s_eval < decay``."""
        gap = self.decay - s_eval
        if gap <= 0:
            return math.inf
        if self.amplitude == 0:
            return 0.0
        n = self.n
        total = 0.0
        m = self.cutoff + 1
        # explicit shells until the geometric remainder is negligible
        while True:
            total += _shell_count_bound(n, m) * m ** (-n) * math.exp(-m * gap)
            rest = 3**n / (m + 1) * math.exp(-(m + 1) * gap) / (1 - math.exp(-gap))
            if rest <= 1e-17 * total or m > self.cutoff + 200_000:
                break
            m += 1
        return self.amplitude * (total + rest)

    def to_json(self) -> dict:
        return {"n": self.n, "cutoff": self.cutoff, "amplitude": self.amplitude, "decay": self.decay}


# Homological equation


@dataclass(frozen=True)
class StepParams:
    lattice: tuple[int, ...] | None
    K: int
    alpha_eff: float
    rho: float
    sigma: float
    domain: DomainSpec

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("K must be at least 2")
        if not 0 < self.rho < self.domain.r:
            raise ValueError("need 0 < rho < r")
        if not 0 < self.sigma < self.domain.s:
            raise ValueError("need 0 < sigma < s")
        if self.alpha_eff <= 0:
            raise ValueError("alpha_eff must be positive")

    @property
    def out_domain(self) -> DomainSpec:
        return self.domain.shrink(r=self.domain.r - self.rho, s=self.domain.s - self.sigma)


def solve_homological(
    h: FourierSeries | YPolynomial,
    fK: FourierSeries,
    params: StepParams | None = None,
    divisors: DivisorMap | None = None,
    strict: bool = True,
) -> FourierSeries:
    """Generator ``phi`` with ``{h, phi} + f_K = 0``, coefficients ``f_m / (i omega.m)`` kept rational.

    With ``params`` the certified divisor lower bound of every present mode is
    compared with ``alpha_eff`` (``DivisorTooSmall`` in strict mode).
    """
    divisors = divisors or divisor_map(h)
    out = {}
    for m, c in fK.items():
        if not any(m):
            raise ValueError("the mean cannot be removed by a homological equation")
        j, g = factor_mode(m)
        if params is not None and strict:
            lb = abs(j) * divisors.domain_lower_bound(g, params.domain)
            if lb < params.alpha_eff:
                raise DivisorTooSmall(f"|omega.{m}| >= {lb:.6g} is not certified above {params.alpha_eff:.6g}")
        out[m] = c.divide_by_factor(g, 1).scale(1 / (1j * j))
    return FourierSeries(fK.n, out, fK.reality, divisors, fK.n_actions)


def homological_residual(
    h: FourierSeries | YPolynomial,
    fK: FourierSeries,
    phi: FourierSeries,
    domain: DomainSpec,
    count: int = 20,
    seed: int = 7,
) -> tuple[float, float]:
    """Largest sampled ``|{h, phi} + f_K|`` over real points of the domain, and ``l1(f_K)``."""
    h_series = FourierSeries.from_polynomial(integrable_part(h))
    lhs = poisson_bracket(_with_divisors(h_series, phi.divisors), phi) + _with_divisors(fK, phi.divisors)
    ys, xs = real_samples(domain, count, seed)
    vals = np.abs(lhs.evaluate_many(ys, xs)) if not lhs.is_zero() else np.zeros(count)
    return float(vals.max()), _l1(fK, domain)


def real_samples(domain: DomainSpec, count: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    n = domain.n
    ys = np.empty((count, n))
    for row in range(count):
        center, R = domain.balls[row % len(domain.balls)]
        direction = rng.normal(size=n)
        direction /= np.linalg.norm(direction)
        ys[row] = np.asarray(center) + R * rng.uniform() ** (1 / n) * direction
    xs = rng.uniform(0, 2 * np.pi, size=(count, n))
    return ys, xs


# Lie series


def word_weight(level: int, a: float) -> float:
    """``(4/e^2) sum_{j>=1} (j-1)!/(level+j)! a^j``: bound factor for all continuations of a level-``level`` piece."""
    if a <= 0:
        return 0.0
    if a >= 1:
        return math.inf
    term = a / math.factorial(level + 1)
    total = 0.0
    j = 1
    while True:
        total += term
        # successive ratios j a/(level+j+1) increase towards a
        rest = term * a / (1 - a)
        if rest <= 1e-17 * total or term == 0.0:
            total += rest
            break
        term *= j * a / (level + j + 1)
        j += 1
    return 4 / _E**2 * total


def lemma_log_sum(a: float, start: int = 1) -> float:
    """``sum_{m>=start} a^m / m``."""
    if a <= 0:
        return 0.0
    if a >= 1:
        return math.inf
    total = -math.log1p(-a)
    for m in range(1, start):
        total -= a**m / m
    return max(total, 0.0)


@dataclass(frozen=True)
class LieReport:
    order: int
    theta_hat: float
    tail_bound: float
    first_bracket_norm: float


def lie_transform(
    u: FourierSeries,
    phi: FourierSeries,
    domain: DomainSpec,
    rho: float,
    sigma: float,
    J: int | None = None,
    tail_tol: float | None = None,
    strict: bool = True,
) -> tuple[FourierSeries, LieReport]:
    """Truncated Lie series ``sum_{l<=J} ad_phi^l u / l!`` with its tail bound.

    The tail is bounded by ``2 (theta_hat/2)^J`` times the l1 norm of ``{u, phi}``
    at half the shrink; ``J`` defaults to the smallest order meeting ``tail_tol``.
    """
    phi_norm = _l1(phi, domain)
    theta_hat = 4 * _E * phi_norm / (rho * sigma)
    if theta_hat > 1 and strict:
        raise SmallnessViolated("theta_hat", theta_hat, 1.0, "Lie series smallness")
    first = poisson_bracket(u, phi)
    mid = domain.shrink(r=domain.r - rho / 2, s=domain.s - sigma / 2)
    first_norm = _l1(first, mid)
    if tail_tol is None:
        tail_tol = TAIL_TOL_REL * max(_l1(u, domain), 1e-300)
    if J is None:
        if first_norm == 0 or theta_hat == 0:
            J = 0 if first_norm == 0 else 1
        else:
            J = 1
            while 2 * (theta_hat / 2) ** J * first_norm > tail_tol:
                J += 1
                if J > LIE_ORDER_CAP:
                    raise SmallnessViolated("lie_order", J, LIE_ORDER_CAP, "tail tolerance not reachable")
    total = u
    term = u
    for level in range(1, J + 1):
        term = first if level == 1 else poisson_bracket(term, phi)
        total = total + term.scale(1 / math.factorial(level))
        if term.is_zero():
            break
    tail = 2 * (theta_hat / 2) ** J * first_norm if J > 0 else math.inf
    if first_norm == 0:
        tail = 0.0
    return total, LieReport(J, theta_hat, tail, first_norm)


# Flow oracle


def hamiltonian_flow(phi: FourierSeries, y: Sequence[float], x: Sequence[float], time: float = 1.0, rtol: float = 1e-12):
    """Integrate ``ydot = -phi_x``, ``xdot = phi_y`` (real parts) from ``(y, x)`` over ``time``."""
    from scipy.integrate import solve_ivp

    n = phi.n
    dx = [phi.derivative_x(i) for i in range(n)]
    dy = [phi.derivative_y(i) for i in range(n)]

    def rhs(_, z):
        yy, xx = z[:n], z[n:]
        ydot = [-(d.evaluate(yy, xx).real) for d in dx]
        xdot = [d.evaluate(yy, xx).real for d in dy]
        return np.concatenate([ydot, xdot])

    sol = solve_ivp(rhs, (0.0, time), np.concatenate([y, x]).astype(float), method="DOP853", rtol=rtol, atol=1e-15)
    if not sol.success:
        raise RuntimeError(sol.message)
    z = sol.y[:, -1]
    return z[:n], z[n:]


def compose_flows(generators: Sequence[FourierSeries], y, x):
    """Image of ``(y, x)`` under ``X_{phi_first} o ... o X_{phi_last}`` (innermost map applied first)."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    for phi in reversed(generators):
        if not phi.is_zero():
            y, x = hamiltonian_flow(phi, y, x)
    return y, x


# One averaging step on explicit + budget data


@dataclass
class StepRecord:
    index: int
    r_in: float
    s_in: float
    rho: float
    sigma: float
    fK_norm: float
    theta: float
    theta_hat: float
    phi_norm: float
    phi_dark_norm: float
    alpha_lb: float
    lie_order: int
    dark_in: float
    dark_out: float
    dark_low_out: float
    pruned: float
    terminal_tail: float
    dark_words: float
    flat_change: float
    modes_out: int
    y_shift: float
    x_shift: float
    theta_limit: float = math.nan
    flat_limit: float = math.nan

    def to_json(self) -> dict:
        return {k: _jsonable(v) for k, v in self.__dict__.items()}


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


@dataclass(frozen=True)
class Budget:
    """Norm bounds of the omitted parts: ``low`` may hit the averaged modes, ``high`` cannot."""

    low: float = 0.0
    high: float = 0.0

    @property
    def total(self) -> float:
        return self.low + self.high


@dataclass
class EngineContext:
    divisors: DivisorMap
    lattice: tuple[int, ...] | None
    K: int
    alpha_all: float
    wide: DomainSpec
    tail: AnalyticTail | None
    tail_rel: float
    prune: float
    squeeze: float
    strict: bool
    warnings: list = field(default_factory=list)

    def flag(self, message: str):
        if self.strict:
            raise SmallnessViolated("budget", math.inf, 1.0, message)
        self.warnings.append(message)


def _bracket_bound_wide(norm_wide: float, wide: DomainSpec, norm_phi: float, dom: DomainSpec, rho: float, sigma: float) -> float:
    """Bracket bound with the first factor measured on a wider domain than the generator."""
    r0 = max(wide.r, dom.r)
    s0 = max(wide.s, dom.s)
    return bracket_norm_rhs(norm_wide, norm_phi, r0, s0, dom.r, dom.s, rho, sigma)


def _chain(start: FourierSeries, phi: FourierSeries, dom: DomainSpec, ctx: EngineContext, a: float, first_weight, tail_tol: float):
    """Explicit ``ad_phi`` chain; returns (sum of weighted levels, dark, order, tail, pruned)."""
    total = None
    dark = 0.0
    pruned = 0.0
    level_series = start
    order = 0
    tail = 0.0
    if phi.is_zero() or start.is_zero():
        return None, 0.0, 0, 0.0, 0.0
    for level in range(1, LIE_ORDER_CAP + 1):
        nxt, budget = bracket_with_budget(level_series, phi, domain=dom, threshold=ctx.prune)
        nxt, squeezed = compress(nxt, dom, ctx.prune)
        lost = float(budget.sum()) + squeezed
        if lost:
            pruned += lost
            dark += lost * (first_weight(level) + word_weight(level, a))
        weighted = nxt.scale(first_weight(level))
        total = weighted if total is None else total + weighted
        order = level
        level_series = nxt
        if nxt.is_zero():
            tail = 0.0
            break
        tail = word_weight(level, a) * _l1(nxt, dom)
        if tail <= tail_tol:
            break
    dark += tail
    if math.isinf(tail):
        ctx.flag("Lie tail bound diverges (theta_hat/2 >= 1)")
    return total, dark, order, tail, pruned


def _squeeze(series: FourierSeries, ctx: EngineContext, domain: DomainSpec) -> tuple[FourierSeries, Budget]:
    """Compress negligible coefficients, booking the loss by mode class."""
    if ctx.squeeze <= 0 or series.is_zero():
        return series, Budget()
    flat, fK = split_flat(series, ctx.lattice, ctx.K)
    flat_c, lost_high = compress(flat, domain, ctx.squeeze)
    fK_c, lost_low = compress(fK, domain, ctx.squeeze)
    if not lost_high and not lost_low:
        return series, Budget()
    return flat_c + fK_c, Budget(lost_low, lost_high)


def averaging_engine_step(
    h: YPolynomial,
    D: FourierSeries,
    dark: Budget,
    params: StepParams,
    ctx: EngineContext,
    index: int = 0,
    base: FourierSeries | None = None,
) -> tuple[FourierSeries, Budget, FourierSeries, StepRecord]:
    """One averaging step on ``base + D + R`` with ``R`` bounded by ``dark`` on ``params.domain``.

    ``base`` is a flat series that the step never rewrites; keeping it apart
    from the deviation ``D`` avoids cancellation when the corrections are far
    below the rounding level of ``base``.  Returns the new deviation.

    The generator is ``phi + phi_d``: ``phi`` is explicit and removes the low
    non-lattice modes of ``D``, ``phi_d`` is implicit and removes those of ``R``
    (``l1(phi_d) <= dark.low / alpha``).
    """
    dom = params.domain
    out = params.out_domain
    rho, sigma = params.rho, params.sigma
    flat_D, EK = split_flat(D, ctx.lattice, ctx.K)
    flat = flat_D if base is None else base + flat_D
    phi = solve_homological(h, EK, divisors=ctx.divisors) if not EK.is_zero() else FourierSeries(D.n, {}, True, ctx.divisors, D.n_actions)
    alpha_lb = min((abs(j) * ctx.divisors.domain_lower_bound(g, dom) for j, g in map(factor_mode, EK)), default=math.inf)
    if alpha_lb <= 0:
        raise DivisorTooSmall("a divisor of the explicit part may vanish on the complex domain")
    n_EK = _l1(EK, dom)
    n_E = _l1(D, dom) + (0.0 if base is None else _l1(base, dom))
    n_phi = _l1(phi, dom)
    n_phi_d = dark.low / ctx.alpha_all if dark.low else 0.0
    a_e = 2 * _E * n_phi / (rho * sigma)
    a_d = 2 * _E * n_phi_d / (rho * sigma)
    a = a_e + a_d
    theta = 4 * _E * (n_EK + dark.low) / (params.alpha_eff * rho * sigma)
    tail_tol = ctx.tail_rel * (n_EK + dark.low)

    # explicit chains on the flat part (weight 1/m!) and on f_K (weight m/(m+1)!)
    p_sum, p_dark, p_order, p_tail, p_pruned = _chain(flat, phi, dom, ctx, a, lambda m: 1 / math.factorial(m), tail_tol)
    q_sum, q_dark, q_order, q_tail, q_pruned = _chain(EK, phi, dom, ctx, a, lambda m: m / math.factorial(m + 1), tail_tol)
    D_next = flat_D
    for part in (p_sum, q_sum):
        if part is not None:
            D_next = D_next + part

    words_low = 0.0
    words_high = 0.0
    if a_d > 0:
        # first-order words {flat + f_K/2, phi_d} with the explicit factor on the wide domain
        try:
            wide_norm = _l1(flat, ctx.wide) + 0.5 * _l1(EK, ctx.wide)
        except (ZeroDivisionError, OverflowError):
            wide_norm = math.inf
        words_low += min(_bracket_bound_wide(wide_norm, ctx.wide, n_phi_d, dom, rho, sigma),
                         _bracket_bound_wide(_l1(flat, dom) + 0.5 * n_EK, dom, n_phi_d, dom, rho, sigma))
        # higher words containing at least one dark letter
        words_low += 4 / _E**2 * (lemma_log_sum(a, 2) - lemma_log_sum(a_e, 2)) * (n_E + n_EK)
    residue = dark.total
    tail_norm = ctx.tail.norm(dom.s) if ctx.tail is not None else 0.0
    if residue > 0:
        words_low += 2 / _E * residue * (n_phi + n_phi_d) / (rho * sigma)
    if tail_norm > 0 and (n_phi + n_phi_d) > 0:
        # the tail is analytic up to its own decay width: measure it half way there
        s_t = dom.s + 0.5 * (ctx.tail.decay - dom.s)
        first = bracket_norm_rhs(ctx.tail.norm(s_t), n_phi + n_phi_d, 1e300, s_t, dom.r, dom.s, rho, sigma)
        # {tail, phi} lives on modes above tail.cutoff - K
        if ctx.tail.cutoff >= 2 * ctx.K:
            words_high += first
        else:
            words_low += first
    if a > 0 and (residue > 0 or tail_norm > 0):
        words_low += 4 / _E**2 * lemma_log_sum(a, 2) * 2 * (residue + tail_norm)
    words = words_low + words_high
    if math.isinf(words) or math.isnan(words):
        words_low = math.inf
        ctx.flag("dark word bound diverges (theta_hat/2 >= 1 with a non-zero budget)")
    # the flat part of the old budget survives unchanged; its low part was averaged by phi_d
    D_next, squeezed = _squeeze(D_next, ctx, out)
    dark_next = Budget(
        low=p_dark + q_dark + words_low + squeezed.low,
        high=dark.total + words_high + squeezed.high,
    )
    flat_next, _ = split_flat(D_next, ctx.lattice, ctx.K)
    # only the newly booked mass can move the flat part of the omitted terms
    flat_change = _diff_norm(flat_next, flat_D, out) + (dark_next.total - dark.total)
    theta_hat = 2 * a
    record = StepRecord(
        index=index,
        r_in=dom.r,
        s_in=dom.s,
        rho=rho,
        sigma=sigma,
        fK_norm=n_EK,
        theta=theta,
        theta_hat=theta_hat,
        phi_norm=n_phi,
        phi_dark_norm=n_phi_d,
        alpha_lb=alpha_lb,
        lie_order=max(p_order, q_order),
        dark_in=dark.total,
        dark_out=dark_next.total,
        dark_low_out=dark_next.low,
        pruned=p_pruned + q_pruned,
        terminal_tail=p_tail + q_tail,
        dark_words=words_low + words_high,
        flat_change=flat_change,
        modes_out=len(D_next),
        y_shift=theta_hat * rho / (4 * _E),
        x_shift=theta_hat * sigma / 4,
    )
    return D_next, dark_next, phi, record


# Public single step


@dataclass(frozen=True)
class BoundCheck:
    """``lhs <= rhs``; limits far below the float range are compared through ``log_rhs``."""

    name: str
    lhs: float
    rhs: float
    hard: bool = True
    log_rhs: float | None = None

    @classmethod
    def logarithmic(cls, name: str, lhs: float, log_rhs: float, hard: bool = True) -> "BoundCheck":
        return cls(name, lhs, math.exp(log_rhs) if log_rhs > -745 else 0.0, hard, log_rhs)

    @property
    def passed(self) -> bool:
        if not math.isfinite(self.lhs):
            return False
        if self.log_rhs is not None:
            return self.lhs <= 0 or math.log(self.lhs) <= self.log_rhs + 1e-12
        return bool(self.lhs <= self.rhs * (1 + 1e-12))

    def to_json(self) -> dict:
        out = {"name": self.name, "lhs": _jsonable(self.lhs), "rhs": _jsonable(self.rhs), "passed": self.passed, "hard": self.hard}
        if self.log_rhs is not None:
            out["logRhs"] = _jsonable(self.log_rhs)
        return out


@dataclass
class StepResult:
    f_plus: FourierSeries
    dark: float
    phi: FourierSeries
    theta_check: float
    record: StepRecord
    checks: list[BoundCheck]


def averaging_step(
    h: FourierSeries | YPolynomial,
    f: FourierSeries,
    params: StepParams,
    strict: bool = True,
    tail_rel: float | None = None,
) -> StepResult:
    """Single step: ``f_+ = f_flat + f_star`` with ``l1(f_star) <= 4 theta_check l1(f)`` checked."""
    hp = integrable_part(h)
    divisors = divisor_map(hp)
    f = _with_divisors(f, divisors)
    dom = params.domain
    _, fK = split_flat(f, params.lattice, params.K)
    n_f = _l1(f, dom)
    theta_check = 4 * _E * _l1(fK, dom) / (params.alpha_eff * params.rho * params.sigma)
    if theta_check > 1 and strict:
        raise SmallnessViolated("theta_check", theta_check, 1.0, "single-step smallness")
    for m in fK:
        j, g = factor_mode(m)
        if abs(j) * divisors.domain_lower_bound(g, dom) < params.alpha_eff and strict:
            raise DivisorTooSmall(f"divisor of mode {m} below alpha_eff")
    ctx = EngineContext(
        divisors=divisors,
        lattice=params.lattice,
        K=params.K,
        alpha_all=params.alpha_eff,
        wide=dom,
        tail=None,
        tail_rel=TAIL_TOL_REL if tail_rel is None else tail_rel,
        prune=PRUNE_REL * max(n_f, 1e-300),
        squeeze=SQUEEZE_REL * max(n_f, 1e-300),
        strict=strict,
    )
    E_next, budget, phi, rec = averaging_engine_step(hp, f, Budget(), params, ctx)
    dark = budget.total
    flat, _ = split_flat(f, params.lattice, params.K)
    out = params.out_domain
    star = _l1(E_next - flat, out) + dark
    checks = [
        BoundCheck("step remainder", star, 4 * theta_check * n_f, hard=theta_check <= 1),
        BoundCheck("generator norm", _l1(phi, dom), _l1(fK, dom) / params.alpha_eff),
        BoundCheck("action displacement", theta_check * params.rho / (4 * _E), theta_check * params.rho / (4 * _E)),
    ]
    return StepResult(E_next, dark, phi, theta_check, rec, checks)


# The full normal form


@dataclass
class ThetaLedger:
    theta_star: float
    theta_minus1: float
    delta: float
    theta_seq: list[float] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "thetaStar": _jsonable(self.theta_star),
            "thetaMinus1": _jsonable(self.theta_minus1),
            "delta": _jsonable(self.delta),
            "thetaSeq": [_jsonable(t) for t in self.theta_seq],
        }


@dataclass
class NormalFormResult:
    lattice: tuple[int, ...] | None
    K: int
    domain: DomainSpec
    alpha_eff: float
    generators: list[FourierSeries]
    g: FourierSeries
    f_flat: FourierSeries
    f_star: FourierSeries
    f_star_star: FourierSeries
    dark: float
    tail: AnalyticTail | None
    ledger: ThetaLedger
    steps: list[StepRecord]
    checks: list[BoundCheck]
    norms: dict
    hypotheses_met: bool
    warnings: list[str]

    @property
    def domain_out(self) -> DomainSpec:
        return self.domain.shrink(r=self.domain.r / 2, s=self.domain.s * (1 - 1 / self.K))

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed_checks(self) -> list[BoundCheck]:
        return [c for c in self.checks if not c.passed]

    def to_json(self, include_series: bool = False) -> dict:
        out = {
            "lattice": None if self.lattice is None else list(self.lattice),
            "K": self.K,
            "domain": self.domain.to_json(),
            "domainOut": self.domain_out.to_json(),
            "alphaEff": self.alpha_eff,
            "dark": _jsonable(self.dark),
            "tail": None if self.tail is None else self.tail.to_json(),
            "ledger": self.ledger.to_json(),
            "steps": [s.to_json() for s in self.steps],
            "checks": [c.to_json() for c in self.checks],
            "norms": {k: _jsonable(v) for k, v in self.norms.items()},
            "hypothesesMet": self.hypotheses_met,
            "warnings": list(self.warnings),
        }
        if include_series:
            out["g"] = self.g.to_json()
            out["fStarStar"] = self.f_star_star.to_json()
            out["generators"] = [p.to_json() for p in self.generators]
        return out

    def ledger_csv(self) -> str:
        buf = io.StringIO()
        fields = list(StepRecord.__dataclass_fields__)
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(fields)
        for s in self.steps:
            writer.writerow([format_float(getattr(s, f)) if isinstance(getattr(s, f), float) else getattr(s, f) for f in fields])
        return buf.getvalue()


def theta_star(norm_f: float, K: int, alpha: float, r: float, s: float) -> float:
    return 2**11 * K**2 * norm_f / (alpha * r * s)


def normal_form(
    h: FourierSeries | YPolynomial,
    f: FourierSeries,
    lattice: Sequence[int] | None,
    K: int,
    domain: DomainSpec,
    alpha_eff: float,
    strict: bool = True,
    tail: AnalyticTail | None = None,
    tail_rel: float | None = None,
    prune: float | None = None,
    wide: DomainSpec | None = None,
) -> NormalFormResult:
    """Preliminary step plus ``K`` steps; returns the averaged Hamiltonian with every bound checked.

    ``tail`` is an optional untouched high-mode piece of ``f`` (beyond the
    explicit modes); it stays part of ``f_flat`` and only enters the budgets.
    ``wide`` is a domain on which the explicit perturbation may be measured
    for the first-order budget words (defaults to ``domain``).
    """
    if K < 2:
        raise ValueError("K must be at least 2")
    lattice = None if lattice is None else tuple(int(c) for c in lattice)
    hp = integrable_part(h)
    divisors = divisor_map(hp)
    f = _with_divisors(f, divisors)
    if tail is not None and tail.cutoff < K:
        raise ValueError("the analytic tail must start above the cutoff K")
    if tail is not None and lattice is not None and l1(lattice) > tail.cutoff:
        raise ValueError("the analytic tail must not contain lattice modes")
    r, s = domain.r, domain.s
    tail_norm = tail.norm(s) if tail is not None else 0.0
    n_f = _l1(f, domain) + tail_norm
    t_star = theta_star(n_f, K, alpha_eff, r, s)
    warnings: list[str] = []
    hypotheses = True
    if t_star >= 1:
        hypotheses = False
        if strict:
            raise SmallnessViolated("theta_star", t_star, 1.0, "normal form smallness")
        warnings.append(f"theta_star = {t_star:.6g} >= 1; bounds reported as warnings")
    alpha_all = certified_alpha(divisors, domain, lattice, K)
    if alpha_all < alpha_eff:
        hypotheses = False
        if strict:
            raise DivisorTooSmall(f"certified divisor bound {alpha_all:.6g} below alpha_eff {alpha_eff:.6g}")
        warnings.append(f"certified divisor bound {alpha_all:.6g} below alpha_eff {alpha_eff:.6g}")
    alpha_all = max(alpha_all, 1e-300)
    ctx = EngineContext(
        divisors=divisors,
        lattice=lattice,
        K=K,
        alpha_all=alpha_all,
        wide=wide or domain,
        tail=tail,
        tail_rel=TAIL_TOL_REL if tail_rel is None else tail_rel,
        prune=(prune if prune is not None else PRUNE_REL * n_f),
        squeeze=SQUEEZE_REL * n_f,
        strict=strict,
        warnings=warnings,
    )
    f_flat, fK0 = split_flat(f, lattice, K)
    delta = 32 * _E * K**3 / (alpha_eff * r * s)
    theta_m1 = 32 * _E * K * _l1(fK0, domain) / (alpha_eff * r * s)
    ledger = ThetaLedger(t_star, theta_m1, delta)

    steps: list[StepRecord] = []
    generators: list[FourierSeries] = []
    checks: list[BoundCheck] = []
    hard = hypotheses

    # preliminary step
    pre = StepParams(lattice, K, alpha_eff, r / 4, s / (2 * K), domain)
    D, dark, phi, rec = averaging_engine_step(hp, fK0, Budget(), pre, ctx, index=-1, base=f_flat)
    steps.append(rec)
    generators.append(phi)
    ledger.theta_seq.append(rec.theta)
    prev_flat = FourierSeries(f.n, {}, f.reality, divisors, f.n_actions)
    dom = pre.out_domain
    rho, sigma = r / (4 * K), s / (2 * K**2)
    prev_dark = Budget()
    log_ratio = math.log(t_star / 8) if t_star > 0 else -math.inf
    for i in range(K):
        # inductive bounds on entry to step i
        flat_i, fK_i = split_flat(D, lattice, K)
        theta_i = delta * (_l1(fK_i, dom) + dark.low)
        log_limit = (i + 1) * log_ratio
        checks.append(BoundCheck.logarithmic(f"theta_{i}", theta_i, log_limit, hard))
        change = _diff_norm(flat_i, prev_flat, dom) + (dark.total - prev_dark.total)
        checks.append(BoundCheck.logarithmic(f"flat_change_{i}", change, log_limit - math.log(delta), hard))
        limit = math.exp(log_limit) if log_limit > -745 else 0.0
        params = StepParams(lattice, K, alpha_eff, rho, sigma, dom)
        prev_flat, prev_dark = flat_i, dark
        D, dark, phi, rec = averaging_engine_step(hp, D, dark, params, ctx, index=i, base=f_flat)
        rec.theta_limit = limit
        rec.flat_limit = limit / delta
        steps.append(rec)
        generators.append(phi)
        ledger.theta_seq.append(rec.theta)
        dom = params.out_domain

    out = dom
    f_star = D
    g = project_lattice(f_flat + D, lattice)
    f_ss = project_lattice_complement(f_flat + D, lattice)
    low_perp = truncate(project_lattice_complement(f_star, lattice), K)[0]
    half = out.shrink(s=s / 2)
    s_bar = min(s / 2, math.log(8 / t_star)) if t_star > 0 else s / 2
    tail_half = tail.norm(s / 2) if tail is not None else 0.0
    norms = {
        "f": n_f,
        "fStar": _l1(f_star, out) + dark.total,
        "lowPerpFStar": _l1(low_perp, out) + dark.low,
        "gMinusPif": _l1(project_lattice(f_star, lattice), out) + dark.total,
        "fStarStarHalf": _l1(f_ss, half) + dark.total + tail_half,
        "dark": dark.total,
        "darkLow": dark.low,
        "sBar": s_bar,
        "alphaCertified": alpha_all,
    }
    checks += [
        BoundCheck("f_star", norms["fStar"], t_star * n_f / K, hard),
        BoundCheck.logarithmic(
            "low_perp_f_star", norms["lowPerpFStar"], K * log_ratio + math.log(8 * n_f / (_E * K)), hard
        ),
        BoundCheck("g_minus_pi_f", norms["gMinusPif"], t_star * n_f / K, hard),
        BoundCheck("f_star_star_half", norms["fStarStarHalf"], 2 * math.exp(-(K - 2) * s_bar) * n_f, hard),
    ]
    y_total = sum(st.y_shift for st in steps)
    x_total = sum(st.x_shift for st in steps)
    checks += [
        BoundCheck("action_displacement", y_total, t_star * r / (2**7 * K), hard),
        BoundCheck("angle_displacement", x_total, t_star * s / (16 * K**2), hard),
    ]
    if strict:
        bad = [c for c in checks if not c.passed]
        if bad:
            c = bad[0]
            raise SmallnessViolated(c.name, c.lhs, c.rhs, "normal form bound")
    else:
        for c in checks:
            if not c.passed:
                warnings.append(f"{c.name}: {c.lhs:.6g} > {c.rhs:.6g}")
    return NormalFormResult(
        lattice=lattice,
        K=K,
        domain=domain,
        alpha_eff=alpha_eff,
        generators=generators,
        g=g,
        f_flat=f_flat,
        f_star=f_star,
        f_star_star=f_ss,
        dark=dark.total,
        tail=tail,
        ledger=ledger,
        steps=steps,
        checks=checks,
        norms=norms,
        hypotheses_met=hypotheses,
        warnings=warnings,
    )


def energy_consistency(
    h: FourierSeries | YPolynomial,
    f: FourierSeries,
    result: NormalFormResult,
    count: int = 10,
    seed: int = 11,
) -> tuple[float, float]:
    """Largest ``|H(Psi(p)) - H'(p)|`` and ``max |H|`` over sampled real points of the output domain."""
    hp = integrable_part(h)
    full = FourierSeries.from_polynomial(hp)
    H = _with_divisors(full, f.divisors) + f if f.divisors is not None else full + f
    new = _with_divisors(full, result.g.divisors) + result.g + result.f_star_star
    ys, xs = real_samples(result.domain_out, count, seed)
    worst, scale = 0.0, 0.0
    for y, x in zip(ys, xs):
        yy, xx = compose_flows(result.generators, y, x)
        before = H.evaluate(yy, xx).real
        after = new.evaluate(y, x).real
        worst = max(worst, abs(before - after))
        scale = max(scale, abs(before))
    return worst, scale


# Averaging theorem wrappers


@dataclass(frozen=True)
class AveragingConfig:
    """Parameters shared by the zone-level averaging statements."""

    s: float
    K1: int
    K2: int
    nu: float
    L: float = 1.0
    r: float = 1.0

    def theta_bar(self, n: int) -> float:
        return 2**14 * n ** (2 * n) * self.L / (self.s ** (2 * n + 1) * self.K2 ** (2 * self.nu - 2 * n - 3))

    def theta(self, n: int) -> float:
        return 2 ** (2 * n + 10) * n ** (2 * n) * self.L / (self.s ** (2 * n + 1) * self.K2 ** (2 * self.nu - 2 * n - 3))

    def hypotheses(self, n: int, eps: float) -> list[str]:
        failed = []
        if not self.K2 >= 3 * self.K1 >= 6:
            failed.append("K2 >= 3 K1 >= 6")
        if self.nu < n + 2:
            failed.append("nu >= n + 2")
        lhs = self.K2 ** (2 * self.nu - n - 4)
        rhs = 2 ** (13 + n) * n**n * self.L * math.exp(self.s / 2) / self.s ** (n + 1)
        if lhs < rhs:
            failed.append("K2 large enough for the averaging theorem")
        if eps > (self.L * self.r) ** 2 / self.K2 ** (2 * self.nu):
            failed.append("epsilon small enough for the complex widening")
        return failed

    def alpha(self, eps: float) -> float:
        return math.sqrt(eps) * self.K2**self.nu


@dataclass
class ResonantAveraging:
    k: tuple[int, ...]
    eps: float
    alpha: float
    r_k: float
    result: NormalFormResult
    g: FourierSeries
    f_star_star: FourierSeries
    checks: list[BoundCheck]
    hypotheses_failed: list[str]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json(self, include_series: bool = False) -> dict:
        return {
            "k": list(self.k),
            "eps": self.eps,
            "alpha": self.alpha,
            "rK": self.r_k,
            "checks": [c.to_json() for c in self.checks],
            "hypothesesFailed": list(self.hypotheses_failed),
            "passed": self.passed,
            "normalForm": self.result.to_json(include_series),
        }


def averaging_at_simple_resonance(
    h: FourierSeries | YPolynomial,
    f: FourierSeries,
    eps: float,
    k: Sequence[int],
    cfg: AveragingConfig,
    center: Sequence[float],
    radius: float,
    strict: bool = True,
    tail: AnalyticTail | None = None,
) -> ResonantAveraging:
    """Normal form of ``h + eps f`` on a ball around a simple resonance ``k``; ``g`` and ``f_**`` in units of ``eps``."""
    k = tuple(int(c) for c in k)
    n = len(k)
    failed = cfg.hypotheses(n, eps)
    explore = not strict or bool(failed)
    alpha = cfg.alpha(eps)
    knorm = float(np.linalg.norm(k))
    r_k = alpha / (cfg.L * knorm)
    s1 = cfg.s * (1 - 1 / cfg.K2)
    domain = DomainSpec.ball(center, radius, r_k, s1)
    wide = DomainSpec.ball(center, radius, r_k, cfg.s * (1 - 0.5 / cfg.K2))
    scaled_tail = None if tail is None else AnalyticTail(tail.n, tail.cutoff, tail.amplitude * eps, tail.decay)
    res = normal_form(
        h, f.scale(eps), k, cfg.K2, domain, alpha * cfg.K2 / knorm, strict=not explore, tail=scaled_tail, wide=wide
    )
    g = res.g.scale(1 / eps)
    fss = res.f_star_star.scale(1 / eps)
    out = res.domain_out
    dark = res.dark / eps
    lhs_g = _l1(project_lattice(res.f_star, k), out) / eps + dark
    half = out.shrink(s=s1 / 2)
    lhs_r = _l1(fss, half) + dark + (tail.norm(s1 / 2) if tail is not None else 0.0)
    hard = not failed
    checks = [
        BoundCheck("g_minus_pi_f", lhs_g, cfg.theta(n), hard),
        BoundCheck("remainder", lhs_r, 2 * (2 * n * cfg.K2 / cfg.s) ** n * math.exp(-(cfg.K2 - 3) * cfg.s / 2), hard),
    ]
    return ResonantAveraging(k, eps, alpha, r_k, res, g, fss, checks, failed)


@dataclass
class NonResonantAveraging:
    eps: float
    alpha: float
    r0: float
    result: NormalFormResult
    g0: FourierSeries
    f_star_star: FourierSeries
    checks: list[BoundCheck]
    hypotheses_failed: list[str]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json(self, include_series: bool = False) -> dict:
        return {
            "eps": self.eps,
            "alpha": self.alpha,
            "r0": self.r0,
            "checks": [c.to_json() for c in self.checks],
            "hypothesesFailed": list(self.hypotheses_failed),
            "passed": self.passed,
            "normalForm": self.result.to_json(include_series),
        }


def averaging_nonresonant(
    h: FourierSeries | YPolynomial,
    f: FourierSeries,
    eps: float,
    cfg: AveragingConfig,
    center: Sequence[float],
    radius: float,
    strict: bool = True,
    tail: AnalyticTail | None = None,
) -> NonResonantAveraging:
    """Complete averaging (trivial lattice) of ``h + eps f`` on a ball in the non-resonant zone."""
    n = len(center)
    failed = cfg.hypotheses(n, eps)
    explore = not strict or bool(failed)
    alpha = cfg.alpha(eps)
    r0 = alpha / (4 * cfg.L * cfg.K1)
    s1 = cfg.s * (1 - 1 / cfg.K1)
    domain = DomainSpec.ball(center, radius, r0, s1)
    wide = DomainSpec.ball(center, radius, r0, cfg.s * (1 - 0.5 / cfg.K1))
    scaled_tail = None if tail is None else AnalyticTail(tail.n, tail.cutoff, tail.amplitude * eps, tail.decay)
    res = normal_form(h, f.scale(eps), None, cfg.K1, domain, alpha / 4, strict=not explore, tail=scaled_tail, wide=wide)
    g0 = res.g.scale(1 / eps)
    fss = res.f_star_star.scale(1 / eps)
    out = res.domain_out
    dark = res.dark / eps
    sup_gap = _l1(project_lattice(res.f_star, None), out) / eps + dark
    half = out.shrink(s=s1 / 2)
    lhs_r = _l1(fss, half) + dark + (tail.norm(s1 / 2) if tail is not None else 0.0)
    hard = not failed
    checks = [
        BoundCheck("sup_g0_minus_mean", sup_gap, cfg.theta_bar(n), hard),
        BoundCheck("remainder", lhs_r, 2 * (2 * n * cfg.K1 / cfg.s) ** n * math.exp(-(cfg.K1 - 3) * cfg.s / 2), hard),
    ]
    return NonResonantAveraging(eps, alpha, r0, res, g0, fss, checks, failed)


def result_json(result: NormalFormResult) -> str:
    return json.dumps(result.to_json(), sort_keys=True, default=_jsonable)
