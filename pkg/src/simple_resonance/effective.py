"""One-angle effective potential at a simple resonance and its cosine-likeness."""

from __future__ import annotations

import cmath
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import bisect, brentq

from .errors import CertificationFailed, ZeroCoefficient
from .fourier import DomainSpec, FourierSeries, fourier_norm_l1, one_d_projection, project_lattice
from .genericity import ClassParams, in_class, tail_tau0, tau0_function
from .lattice import generators_up_to, l1, resonance_frame
from .normal_form import (
    AnalyticTail,
    AveragingConfig,
    BoundCheck,
    ResonantAveraging,
    averaging_at_simple_resonance,
    real_samples,
)
from .serialize import format_float
from .polynomial import YPolynomial

_E = math.e
MORSE_SAMPLES = 2048


# Phase and modulus


def wrap_angle(t: float) -> float:
    """``t`` reduced to ``[0, 2 pi)``; tiny negative angles would otherwise round up to ``2 pi``."""
    t = float(t) % (2 * math.pi)
    return 0.0 if t == 2 * math.pi else t


def phase_and_modulus(fk: complex) -> tuple[float, float]:
    """``(|f_k|, theta)`` with ``f_k e^{i t} + conj = 2 |f_k| cos(t + theta)`` and ``theta`` in ``[0, 2 pi)``."""
    fk = complex(fk)
    if fk == 0:
        raise ZeroCoefficient("the first harmonic vanishes at this resonance")
    # cmath.phase overflows on subnormal parts
    return abs(fk), wrap_angle(math.atan2(fk.imag, fk.real))


def first_harmonic(modulus: float, phase: float) -> tuple[complex, complex]:
    """Coefficients of ``e^{i t}`` and ``e^{-i t}`` in ``2 modulus cos(t + phase)``."""
    c = modulus * cmath.exp(1j * phase)
    return c, c.conjugate()


def extract_Gk(g: FourierSeries, k: Sequence[int]) -> FourierSeries:
    """Re-index a series supported on ``Z k`` as a function of ``theta = k.x`` (mean included)."""
    k = tuple(int(c) for c in k)
    if project_lattice(g, k) != g:
        raise ValueError("the series has modes outside the resonant lattice")
    G = one_d_projection(g, k)
    mean = g.mean()
    if mean.is_zero():
        return G
    coeffs = G.coefficient_map()
    coeffs[(0,)] = mean
    return FourierSeries(1, coeffs, G.reality, G.divisors, G.n_actions)


def constant_coefficients(G: FourierSeries, y: Sequence[float] | None = None) -> dict[int, complex]:
    """``{j: G_j}`` with non-constant coefficients evaluated at ``y``."""
    out = {}
    for (j,), c in G.items():
        if c.is_constant():
            out[j] = complex(c.polynomial().constant_term())
        else:
            if y is None:
                raise ValueError("coefficient depends on the actions: pass an evaluation point")
            out[j] = complex(c.evaluate(list(y), G.divisors))
    return out


# Morse certification


@dataclass
class MorseReport:
    critical_count: int
    maxima: list
    minima: list
    theta_star_window: float
    monotone_verified: bool
    certified: bool
    norm_width2: float
    gamma: float
    derivative_bound: float
    second_derivative_bound: float
    monotonicity_constant: float
    failures: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "criticalCount": self.critical_count,
            "maxima": list(self.maxima),
            "minima": list(self.minima),
            "thetaStarWindow": self.theta_star_window,
            "monotoneSegmentsVerified": self.monotone_verified,
            "certified": self.certified,
            "normWidth2": self.norm_width2,
            "gamma": self.gamma,
            "derivativeBound": self.derivative_bound,
            "secondDerivativeBound": self.second_derivative_bound,
            "monotonicityConstant": self.monotonicity_constant,
            "failures": list(self.failures),
        }


def _derivatives(coeffs: dict[int, complex], theta: np.ndarray, order: int) -> np.ndarray:
    total = np.zeros_like(theta, dtype=complex)
    for j, c in coeffs.items():
        if j:
            total += c * (1j * j) ** order * np.exp(1j * j * theta)
    return total.real


def _potential_derivative(phase: float, coeffs: dict[int, complex]):
    def psi(t):
        t = np.asarray(t, dtype=float)
        return -np.sin(t + phase) + _derivatives(coeffs, t, 1)

    def dpsi(t):
        t = np.asarray(t, dtype=float)
        return -np.cos(t + phase) + _derivatives(coeffs, t, 2)

    return psi, dpsi


def count_critical_points(phase: float, coeffs: dict[int, complex], samples: int = 1 << 14) -> tuple[list, list]:
    """Dense root count of ``d/dt [cos(t + phase) + G(t)]``: returns (maxima, minima) in ``[0, 2 pi)``."""
    psi, dpsi = _potential_derivative(phase, coeffs)
    grid = np.linspace(0.0, 2 * np.pi, samples + 1)
    vals = psi(grid)
    # rounding noise at a root sitting on a grid node must not hide it across the wrap
    scale = 1.0 + sum(abs(j * c) for j, c in coeffs.items())
    vals = np.where(np.abs(vals) < 64 * np.finfo(float).eps * scale, 0.0, vals)
    maxima, minima = [], []
    for i in range(samples):
        a, b = vals[i], vals[i + 1]
        if a == 0.0:
            root = grid[i]
        elif a * b < 0:
            root = brentq(lambda t: float(psi(t)), grid[i], grid[i + 1], xtol=1e-14)
        else:
            continue
        (maxima if float(dpsi(root)) < 0 else minima).append(wrap_angle(root))
    return sorted(maxima), sorted(minima)


def width2_norm(coeffs: dict[int, complex]) -> float:
    return sum(abs(c) * math.exp(2 * abs(j)) for j, c in coeffs.items() if j)


def morse_check(
    phase: float,
    Gt: FourierSeries | dict,
    gamma: float,
    extra: float = 0.0,
    y: Sequence[float] | None = None,
    samples: int = MORSE_SAMPLES,
    strict: bool = True,
) -> MorseReport:
    """Certify that ``t -> cos(t + phase) + Gt(t)`` has one maximum, one minimum and nothing else.

    ``extra`` bounds the width-2 norm of any part of ``Gt`` not given explicitly.
    The certificate is analytic (coefficient bounds on the first two derivatives)
    and each segment is cross-checked on ``samples`` equispaced angles.
    """
    coeffs = Gt if isinstance(Gt, dict) else constant_coefficients(Gt, y)
    norm2 = width2_norm(coeffs) + extra
    b1 = sum(abs(j) * abs(c) for j, c in coeffs.items() if j) + extra / _E**2
    b2 = sum(j * j * abs(c) for j, c in coeffs.items() if j) + extra / _E**2
    g_e = gamma / _E**2
    failures: list[str] = []
    if not (norm2 <= gamma < 1):
        failures.append(f"precondition: width-2 norm {norm2:.6g} with gamma {gamma:.6g} (need norm <= gamma < 1)")
    theta_star = math.asin(min(g_e, 1.0))
    c = math.sqrt(max(1 - g_e, 0.0)) - g_e
    if not failures:
        if b1 > g_e * (1 + 1e-12) or b2 > g_e * (1 + 1e-12):
            failures.append("derivative bounds exceed gamma/e^2")
        if c <= 0:
            failures.append("monotonicity constant is not positive")
    psi, dpsi = _potential_derivative(phase, coeffs)
    monotone = False
    maxima: list[float] = []
    minima: list[float] = []
    if not failures:
        theta = 2 * np.pi * np.arange(samples) / samples
        phi = (theta + phase) % (2 * np.pi)
        p, dp = psi(theta), dpsi(theta)
        slack = extra / _E**2
        segments = [
            ("psi < 0 on (theta*, pi - theta*)", (phi > theta_star) & (phi < np.pi - theta_star), p < -slack),
            ("psi > 0 on (pi + theta*, 2 pi - theta*)", (phi > np.pi + theta_star) & (phi < 2 * np.pi - theta_star), p > slack),
            ("psi' <= -c near the maximum", (phi < theta_star) | (phi > 2 * np.pi - theta_star), dp <= -c + slack),
            ("psi' >= c near the minimum", np.abs(phi - np.pi) < theta_star, dp >= c - slack),
        ]
        for name, mask, ok in segments:
            if np.any(mask & ~ok):
                failures.append(name)
        monotone = not failures
        if monotone:
            # one sign change in each window, located by bracketing in the angle variable
            lo, hi = -phase - theta_star, -phase + theta_star
            maxima = [wrap_angle(brentq(lambda t: float(psi(t)), lo, hi, xtol=1e-14))]
            lo, hi = np.pi - phase - theta_star, np.pi - phase + theta_star
            minima = [wrap_angle(brentq(lambda t: float(psi(t)), lo, hi, xtol=1e-14))]
    certified = not failures
    if not certified:
        if strict:
            raise CertificationFailed(failures[0])
        maxima, minima = count_critical_points(phase, coeffs)
    return MorseReport(
        critical_count=len(maxima) + len(minima),
        maxima=maxima,
        minima=minima,
        theta_star_window=theta_star,
        monotone_verified=monotone,
        certified=certified,
        norm_width2=norm2,
        gamma=gamma,
        derivative_bound=b1,
        second_derivative_bound=b2,
        monotonicity_constant=c,
        failures=failures,
    )


# The complete normal form at a resonance


@dataclass(frozen=True)
class EffectiveConfig:
    gamma: float
    delta: float
    averaging: AveragingConfig

    def tau0(self, n: int) -> float:
        return tail_tau0(self.delta, self.gamma, self.averaging.s, n)

    def hypotheses(self, n: int, eps: float) -> list[str]:
        a = self.averaging
        failed = list(a.hypotheses(n, eps))
        if not (0 < self.delta <= 1 and 0 < self.gamma <= 1):
            failed.append("0 < delta, gamma <= 1")
        if not self.gamma * self.delta < 2**9 / a.s**n * math.exp(-(n**2) / 2):
            failed.append("gamma delta below the first-harmonic threshold")
        if a.nu < 1.5 * n + 2:
            failed.append("nu >= 3n/2 + 2")
        lhs = a.K2 ** (2 * a.nu - 3 * n - 3)
        rhs = math.exp(a.s + 5) * 2 ** (n + 11) * n ** (2 * n) * a.L / (a.s ** (2 * n + 1) * self.gamma * self.delta)
        if lhs < rhs:
            failed.append("K2 large enough for the effective potential")
        return failed

    def remainder_bound(self, n: int) -> float:
        s = self.averaging.s
        return 2 ** (10 * n) * n ** (3 * n) / (s ** (3 * n) * self.delta) * math.exp(-self.averaging.K2 * s / 8)

    def admissible(self, n: int) -> list[tuple[int, ...]]:
        t0 = self.tau0(n)
        return [g for g in generators_up_to(n, self.averaging.K1) if l1(g) >= t0]


@dataclass
class EffectivePotential:
    k: tuple[int, ...]
    modulus: float
    phase: float
    Gk: FourierSeries
    GkTilde: FourierSeries
    remainder: FourierSeries
    bounds: dict
    checks: list
    morse: MorseReport | None
    hypotheses_failed: list
    warnings: list
    averaging: ResonantAveraging | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks) and (self.morse is not None and self.morse.certified)

    def to_json(self, include_series: bool = True) -> dict:
        out = {
            "k": list(self.k),
            "modulus": self.modulus,
            "phase": self.phase,
            "bounds": dict(self.bounds),
            "checks": [c.to_json() for c in self.checks],
            "morse": None if self.morse is None else self.morse.to_json(),
            "hypothesesFailed": list(self.hypotheses_failed),
            "hypothesesMet": not self.hypotheses_failed,
            "warnings": list(self.warnings),
            "passed": self.passed,
        }
        if include_series:
            out["Gk"] = self.Gk.to_json()
            out["GkTilde"] = self.GkTilde.to_json()
        return out


def _zone_modulus(fk_coeff, f: FourierSeries, center, domain: DomainSpec) -> tuple[float, float]:
    """Modulus and phase at the centre; the modulus is the minimum over sampled real zone points."""
    if fk_coeff.is_constant():
        mod, ph = phase_and_modulus(complex(fk_coeff.polynomial().constant_term()))
        return mod, ph
    mod, ph = phase_and_modulus(complex(fk_coeff.evaluate(list(center), f.divisors)))
    ys, _ = real_samples(domain, 64, 5)
    low = min(abs(complex(fk_coeff.evaluate(list(y), f.divisors))) for y in ys)
    if low == 0:
        raise ZeroCoefficient("the first harmonic vanishes inside the zone")
    return min(mod, low), ph


def complete_normal_form(
    h,
    f: FourierSeries,
    eps: float,
    k: Sequence[int],
    cfg: EffectiveConfig,
    center: Sequence[float],
    radius: float,
    strict: bool = True,
    tail: AnalyticTail | None = None,
) -> EffectivePotential:
    """Averaged Hamiltonian at ``k`` in the form ``h + 2|f_k| eps (cos(k.x + theta) + Gt + remainder)``.

    Failed hypotheses (including non-admissible ``k``) switch to explore mode:
    bounds are computed and reported but nothing is raised.
    """
    k = tuple(int(c) for c in k)
    n = len(k)
    a = cfg.averaging
    failed = cfg.hypotheses(n, eps)
    t0 = cfg.tau0(n)
    if not t0 <= l1(k) <= a.K1:
        failed.append(f"|k|_1 = {l1(k)} outside [tau0, K1] = [{t0:.6g}, {a.K1}]")
    membership = in_class(f, ClassParams(a.s, n, cfg.delta, tau0_function(cfg.gamma, a.s, n), a.K1), y0=center)
    if not membership.member:
        failed.append(f"potential outside the non-degenerate class (witness {membership.witness})")
    warnings = []
    if membership.vacuous:
        warnings.append("class membership vacuous below the mode cutoff")
    if k not in f:
        raise ZeroCoefficient(f"f has no {k} coefficient")
    explore = (not strict) or bool(failed)
    avg = averaging_at_simple_resonance(h, f, eps, k, a, center, radius, strict=not explore, tail=tail)
    res = avg.result
    out = res.domain_out
    modulus, phase = _zone_modulus(f.coefficient(k), f, center, out)
    norm_factor = 2 * modulus

    # G^k - T_1 F^k = (g^k - Pi f) + (F^k - T_1 F^k), both one-angle
    correction = one_d_projection(project_lattice(res.f_star, k), k).scale(1 / eps)
    higher = one_d_projection(project_lattice(f, k), k).filter(lambda m: abs(m[0]) != 1)
    deviation = correction + FourierSeries(1, higher.coefficient_map(), True, correction.divisors, correction.n_actions)
    Gt = deviation.scale(1 / norm_factor)
    dark = res.dark / eps
    width_ok = l1(k) * out.s >= 2
    dark_w2 = dark if (width_ok or dark == 0) else math.inf
    gt_norm = (fourier_norm_l1(deviation, out.shrink(s=2.0)).value + dark_w2) / norm_factor if not deviation.is_zero() else dark_w2 / norm_factor
    rem_lhs = next(c.lhs for c in avg.checks if c.name == "remainder") / norm_factor
    hard = not failed
    checks = list(avg.checks) + [
        BoundCheck("Gk_tilde_width2", gt_norm, cfg.gamma, hard),
        BoundCheck("remainder_normalized", rem_lhs, cfg.remainder_bound(n), hard),
    ]
    morse = morse_check(phase, Gt, cfg.gamma, extra=dark_w2 / norm_factor, y=center, strict=not explore)
    if strict and not explore:
        bad = [c for c in checks if not c.passed]
        if bad:
            raise CertificationFailed(f"{bad[0].name}: {bad[0].lhs:.6g} > {bad[0].rhs:.6g}")
    else:
        warnings += [f"{c.name}: {c.lhs:.6g} > {c.rhs:.6g}" for c in checks if not c.passed]
        warnings += list(res.warnings)
    Gk = extract_Gk(res.g.scale(1 / eps), k)
    bounds = {
        "gamma": cfg.gamma,
        "GkTildeNorm": gt_norm,
        "remainderNormalized": rem_lhs,
        "remainderBound": cfg.remainder_bound(n),
        "tau0": t0,
        "darkEpsUnits": dark,
    }
    return EffectivePotential(
        k=k,
        modulus=modulus,
        phase=phase,
        Gk=Gk,
        GkTilde=Gt,
        remainder=res.f_star_star.scale(1 / (eps * norm_factor)),
        bounds=bounds,
        checks=checks,
        morse=morse,
        hypotheses_failed=failed,
        warnings=warnings,
        averaging=avg,
    )


# Example potential


def example_potential(n: int, delta: float, s: float, cutoff: int) -> tuple[FourierSeries, AnalyticTail]:
    """``2 delta sum_g |g|_1^-n e^{-|g|_1 s} cos(g.x)`` over generators: explicit part and analytic tail."""
    coeffs = {}
    for g in generators_up_to(n, cutoff):
        c = delta * l1(g) ** (-n) * math.exp(-l1(g) * s)
        coeffs[g] = c
        coeffs[tuple(-v for v in g)] = c
    return FourierSeries(n, coeffs), AnalyticTail(n, cutoff, delta, s)


# Pendulum reduction


@dataclass(frozen=True)
class PendulumModel:
    k: tuple[int, ...]
    y0: tuple[float, ...]
    Y0: tuple[float, ...]
    mk: float
    amplitude: float
    phase: float
    frame: dict

    @property
    def pendulum_valid(self) -> bool:
        return abs(self.mk) > 1e-12

    def energy(self, Yn, Xn):
        Yn = np.asarray(Yn, dtype=float)
        Xn = np.asarray(Xn, dtype=float)
        return 0.5 * self.mk * (Yn - self.Y0[-1]) ** 2 + self.amplitude * np.cos(Xn + self.phase)

    def separatrix_energy(self) -> float:
        return math.copysign(self.amplitude, self.mk)

    def separatrix_half_width(self) -> float:
        if not self.pendulum_valid:
            return math.inf
        return 2 * math.sqrt(self.amplitude / abs(self.mk))

    def widest_angle(self) -> float:
        """Angle of maximal separatrix opening (the elliptic point)."""
        return wrap_angle(math.pi - self.phase) if self.mk > 0 else wrap_angle(-self.phase)

    def to_json(self) -> dict:
        return {
            "k": list(self.k),
            "y0": list(self.y0),
            "Y0": list(self.Y0),
            "mk": self.mk,
            "amplitude": self.amplitude,
            "phase": self.phase,
            "pendulumValid": self.pendulum_valid,
            "separatrixEnergy": self.separatrix_energy(),
            "separatrixHalfWidth": self.separatrix_half_width(),
            "frame": self.frame,
        }


def hessian(h: YPolynomial, y: Sequence[float]) -> np.ndarray:
    n = h.n
    grad = h.gradient()
    return np.array([[grad[i].derivative(j)(y).real for j in range(n)] for i in range(n)])


def pendulum_reduce(
    h: YPolynomial,
    k: Sequence[int],
    segment: tuple[Sequence[float], Sequence[float]],
    amplitude: float,
    phase: float = 0.0,
    tol: float = 1e-12,
) -> PendulumModel:
    """Locate the resonant point on ``segment`` by bisection and expand ``h`` to second order along ``k``."""
    k = tuple(int(c) for c in k)
    ya = np.asarray(segment[0], dtype=float)
    yb = np.asarray(segment[1], dtype=float)
    grad = h.gradient()
    kv = np.asarray(k, dtype=float)

    def resonance(t: float) -> float:
        y = ya + t * (yb - ya)
        return float(sum(kv[i] * grad[i](y).real for i in range(h.n)))

    fa, fb = resonance(0.0), resonance(1.0)
    if fa == 0:
        t0 = 0.0
    elif fb == 0:
        t0 = 1.0
    elif fa * fb > 0:
        raise ValueError("the segment does not cross the resonance")
    else:
        t0 = bisect(resonance, 0.0, 1.0, xtol=tol)
    y0 = ya + t0 * (yb - ya)
    if abs(resonance(t0)) > 1e-10 * max(1.0, float(np.abs(yb - ya).sum())):
        raise ValueError("resonant point not located to tolerance")
    H = hessian(h, y0)
    mk = float(kv @ H @ kv)
    frame = resonance_frame(k)
    Y0 = frame.actions_to_frame(y0)
    return PendulumModel(k, tuple(map(float, y0)), tuple(map(float, Y0)), mk, float(amplitude), float(phase), frame.to_json())


@dataclass
class Portrait:
    model: PendulumModel
    Y: np.ndarray
    X: np.ndarray
    energy: np.ndarray

    def csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# separatrix_energy={format_float(self.model.separatrix_energy())}\n")
        buf.write(f"# separatrix_half_width={format_float(self.model.separatrix_half_width())}\n")
        buf.write(f"# widest_angle={format_float(self.model.widest_angle())}\n")
        buf.write("X,Y,energy\n")
        for i, x in enumerate(self.X):
            for j, y in enumerate(self.Y):
                buf.write(f"{format_float(float(x))},{format_float(float(y))},{format_float(float(self.energy[i, j]))}\n")
        return buf.getvalue()

    def measured_half_width(self) -> float:
        """Half-width of the separatrix read off the raster column through the widest angle."""
        column = int(np.argmin(np.abs(((self.X - self.model.widest_angle()) + np.pi) % (2 * np.pi) - np.pi)))
        e = self.energy[column] - self.model.separatrix_energy()
        if self.model.mk < 0:
            e = -e
        inside = e <= 0
        if not inside.any():
            return 0.0
        center = self.model.Y0[-1]
        idx = np.flatnonzero(inside)
        widths = []
        for edge, step in ((idx[-1], 1), (idx[0], -1)):
            nxt = edge + step
            if 0 <= nxt < len(self.Y):
                # linear interpolation of the level crossing
                t = e[edge] / (e[edge] - e[nxt])
                widths.append(abs(self.Y[edge] + t * (self.Y[nxt] - self.Y[edge]) - center))
            else:
                widths.append(abs(self.Y[edge] - center))
        return float(np.mean(widths))


def level_set_portrait(model: PendulumModel, n_y: int = 400, n_x: int = 128, span: float | None = None) -> Portrait:
    """Energy raster on a ``(X_n, Y_n)`` grid; one angle column passes through the widest opening."""
    half = model.separatrix_half_width()
    if span is None:
        span = 2 * half if math.isfinite(half) and half > 0 else 1.0
    Y = model.Y0[-1] + np.linspace(-span, span, n_y)
    X = (model.widest_angle() + 2 * np.pi * np.arange(n_x) / n_x) % (2 * np.pi)
    X.sort()
    energy = model.energy(Y[None, :], X[:, None])
    return Portrait(model, Y, X, energy)


# Calculus lemma


@dataclass(frozen=True)
class LemmaCheck:
    hypotheses: bool
    holds: bool

    def __bool__(self) -> bool:
        return self.holds


def calc_lemma_check(a: float, eps: float, t: float) -> LemmaCheck:
    """``e^{-t} t^a < eps`` under ``a > 2 ln 2``, ``0 < eps < e^{-a^2/2}``, ``t > 4 ln(1/eps)``."""
    hyp = a > 2 * math.log(2) and 0 < eps < math.exp(-a * a / 2) and t > 4 * math.log(1 / eps)
    log_lhs = -t + a * math.log(t) if t > 0 else -math.inf
    return LemmaCheck(hyp, log_lhs < math.log(eps) if eps > 0 else False)
