"""Executable acceptance criteria shared by ``verify-all`` and the test-suite."""

from __future__ import annotations

import itertools
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .effective import (
    EffectiveConfig,
    complete_normal_form,
    example_potential,
    level_set_portrait,
    pendulum_reduce,
)
from .fixtures import coupled_pendulum, hamiltonian, perpendicular_base, two_harmonic
from .fourier import DomainSpec, FourierSeries, project_lattice_complement, truncate
from .genericity import (
    CartanParams,
    ClassParams,
    cartan_bad_set,
    constant_tail,
    counterexample_family,
    empirical_measure,
)
from .lattice import bezout_matrix, integer_det, vector_gcd
from .normal_form import (
    AveragingConfig,
    certified_alpha,
    compose_flows,
    divisor_map,
    homological_residual,
    lie_transform,
    normal_form,
    solve_homological,
)
from .resonance import CoveringParams, FrequencyMap, classify, classify_frequencies, measure_estimate_D2, sample_ball, verify_batch

DEFAULT_SEED = 20261015


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    measured: dict
    limit_seconds: float
    seconds: float = 0.0
    notes: list = field(default_factory=list)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        key = ", ".join(f"{k}={_short(v)}" for k, v in self.measured.items() if not isinstance(v, (list, dict)))
        return f"criterion {self.number:>2} {status} [{self.seconds:.1f}s/{self.limit_seconds:.0f}s] {self.title}: {key}"

    def to_json(self) -> dict:
        # wall-clock time is deliberately left out so reports are reproducible
        return {"criterion": self.number, "title": self.title, "passed": self.passed, "measured": self.measured, "notes": list(self.notes)}


def _short(v) -> str:
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def _timed(number: int, title: str, limit: float, body: Callable[[], tuple[bool, dict, list]]) -> CriterionResult:
    start = time.perf_counter()
    passed, measured, notes = body()
    seconds = time.perf_counter() - start
    if seconds > limit:
        notes = list(notes) + [f"runtime {seconds:.1f}s above the {limit:.0f}s budget"]
        passed = False
    return CriterionResult(number, title, passed, measured, limit, seconds, notes)


# 1. Bezout frames


def frame_violations(max_n: int = 4, bound: int = 10) -> tuple[int, list]:
    count, bad = 0, []
    for n in range(1, max_n + 1):
        for k in itertools.product(range(-bound, bound + 1), repeat=n):
            if not any(k):
                continue
            count += 1
            A = bezout_matrix(k)
            if tuple(int(v) for v in A[-1]) != k or integer_det(A) != vector_gcd(k) or int(np.abs(A).max()) != max(map(abs, k)):
                bad.append(k)
    return count, bad


def criterion_1(seed: int = DEFAULT_SEED) -> CriterionResult:
    def body():
        count, bad = frame_violations()
        notes = []
        if bad and all(len(k) == 1 and k[0] < 0 for k in bad):
            notes.append("every violation is one-dimensional with k < 0: det [k] = k = -gcd(k), no integer matrix can do better")
        return not bad, {"vectors": count, "violations": len(bad), "examples": [list(k) for k in bad[:5]]}, notes

    return _timed(1, "Bezout frames exhaustive", 10, body)


# 2. Covering


COVER_FIXTURES = (
    ("quadratic", 2, 0.02, 3, 9),
    ("anisotropic", 2, 0.02, 3, 9),
    ("shear", 3, 0.05, 2, 6),
)


def criterion_2(seed: int = DEFAULT_SEED) -> CriterionResult:
    def body():
        rng = np.random.default_rng(seed)
        rows = []
        ok = True
        for name, n, alpha, K1, K2 in COVER_FIXTURES:
            omega = FrequencyMap(hamiltonian(name, n).gradient())
            p = CoveringParams(alpha, K1, K2, M=4.0)
            ys = sample_ball(np.zeros(n), 1.0, 10_000, rng)
            batch = classify_frequencies(omega.evaluate_many(ys), p)
            gaps = int((~batch.covered).sum())
            cert = int((~verify_batch(batch, p)).sum())
            # scalar path on a subset; raises on a gap
            for y in ys[:100]:
                classify(y, omega, p)
            rows.append({"fixture": name, "n": n, "gaps": gaps, "certificateFailures": cert})
            ok &= gaps == 0 and cert == 0
        return ok, {"fixtures": rows, "gaps": sum(r["gaps"] for r in rows), "certificateFailures": sum(r["certificateFailures"] for r in rows)}, []

    return _timed(2, "covering completeness", 30, body)


# 3. Double-resonance measure scaling


def criterion_3(seed: int = DEFAULT_SEED) -> CriterionResult:
    def body():
        omega = FrequencyMap(hamiltonian("quadratic", 2).gradient())
        p = CoveringParams(0.02, 3, 9, M=4.0)
        est = measure_estimate_D2(omega, (0.3, 0.2), 0.3, p, 100_000, seed)
        ratio = est.scaling_ratio
        passed = ratio is not None and 3 <= ratio <= 5 and est.per_pair_ok
        return passed, {"ratio": ratio, "ratioStdError": est.scaling_std_error, "measure": est.measure, "perPairOk": est.per_pair_ok}, []

    return _timed(3, "double-resonance measure scales like alpha^2", 60, body)


# 4. Homological equation and Lie series against the flow


def coupled_fixture(eps: float):
    h = hamiltonian("quadratic", 2)
    f = coupled_pendulum(2).scale(eps)
    domain = DomainSpec.ball((0.0, 0.8), 0.05, 0.05, 0.5)
    return h, f, domain


def criterion_4(seed: int = DEFAULT_SEED) -> CriterionResult:
    def body():
        h, f, domain = coupled_fixture(1e-5)
        lattice = (1, 0)
        fK = project_lattice_complement(truncate(f, 6)[0], lattice)
        phi = solve_homological(h, fK)
        resid, fk_norm = homological_residual(h, fK, phi, domain, 20, seed)
        ratio = resid / fk_norm
        # two Lie steps versus the integrated flows
        H = FourierSeries.from_polynomial(h) + f
        phi2 = phi.scale(0.5)
        rho, sigma = 0.02, 0.2
        u1, _ = lie_transform(H, phi, domain, rho, sigma)
        u2, _ = lie_transform(u1, phi2, domain.shrink(r=domain.r - rho, s=domain.s - sigma), rho, sigma)
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(5):
            y = np.array(domain.center) + rng.uniform(-0.01, 0.01, 2)
            x = rng.uniform(0, 2 * np.pi, 2)
            Y, X = compose_flows([phi, phi2], y, x)
            worst = max(worst, abs(u2.evaluate(y, x).real - H.evaluate(Y, X).real))
        passed = ratio <= 1e-9 and worst <= 1e-8
        return passed, {"residualRatio": ratio, "lieVersusFlow": worst}, []

    return _timed(4, "homological residual and Lie series versus flow", 60, body)


# 5. Normal-form bounds


def criterion_5(seed: int = DEFAULT_SEED, eps: float = 1e-5) -> CriterionResult:
    def body():
        h, f, domain = coupled_fixture(eps)
        alpha = certified_alpha(divisor_map(h), domain, (1, 0), 6)
        res = normal_form(h, f, (1, 0), 6, domain, alpha, strict=False)
        wanted = ("g_minus_pi_f", "low_perp_f_star", "f_star_star_half")
        named = {c.name: c for c in res.checks}
        steps = [c for c in res.checks if c.name.startswith("theta_")]
        passed = all(named[w].passed for w in wanted) and all(c.passed for c in steps) and res.passed
        measured = {w: named[w].lhs for w in wanted}
        measured["thetaStar"] = res.ledger.theta_star
        measured["hypothesesMet"] = res.hypotheses_met
        measured["maxStepRatio"] = max(c.lhs / c.rhs for c in steps) if steps else 0.0
        notes = [] if res.hypotheses_met else ["smallness hypotheses fail at this epsilon; bounds evaluated in explore mode"]
        return passed, measured, notes

    return _timed(5, "normal-form bounds", 300, body)


# 6 and 7. Effective potential on the example potential


EFFPOT_N, EFFPOT_S, EFFPOT_DELTA, EFFPOT_GAMMA = 2, 1.0, 0.5, 0.95
EFFPOT_K1, EFFPOT_K2, EFFPOT_NU, EFFPOT_ALPHA = 28, 84, 10, 0.01
EXPLICIT_MARGIN = 20
CENTER_DISTANCE = 8.0


def effpot_config(K2: int = EFFPOT_K2) -> tuple[EffectiveConfig, float]:
    cfg = EffectiveConfig(EFFPOT_GAMMA, EFFPOT_DELTA, AveragingConfig(s=EFFPOT_S, K1=EFFPOT_K1, K2=K2, nu=EFFPOT_NU))
    eps = (EFFPOT_ALPHA / K2**EFFPOT_NU) ** 2
    return cfg, eps


def effpot_job(args) -> dict:
    k, K2 = args
    cfg, eps = effpot_config(K2)
    f, tail = example_potential(EFFPOT_N, EFFPOT_DELTA, EFFPOT_S, K2 + EXPLICIT_MARGIN)
    h = hamiltonian("quadratic", EFFPOT_N)
    knorm = float(np.linalg.norm(k))
    center = perpendicular_base(k, CENTER_DISTANCE)
    ep = complete_normal_form(h, f, eps, k, cfg, center, EFFPOT_ALPHA / (2 * knorm), tail=tail)
    out = ep.to_json(include_series=False)
    out["fStarStarHalf"] = next(c.lhs for c in ep.checks if c.name == "remainder") * eps
    return out


def run_jobs(fn, items, jobs: int = 1) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def counterexample_report() -> dict:
    cfg, _ = effpot_config()
    f = two_harmonic(2)
    ep = complete_normal_form(hamiltonian("quadratic", 2), f, 1e-6, (1, 0), cfg, (0.0, 1.0), 0.1, strict=False)
    return {
        "criticalCount": ep.morse.critical_count,
        "certified": ep.morse.certified,
        "maxima": ep.morse.maxima,
        "minima": ep.morse.minima,
        "hypothesesFailed": ep.hypotheses_failed,
    }


def criterion_6(seed: int = DEFAULT_SEED, jobs: int = 1, ks=None) -> CriterionResult:
    def body():
        cfg, _ = effpot_config()
        todo = list(ks) if ks is not None else cfg.admissible(EFFPOT_N)
        rows = run_jobs(effpot_job, [(k, EFFPOT_K2) for k in todo], jobs)
        worst_g = max(r["bounds"]["GkTildeNorm"] / r["bounds"]["gamma"] for r in rows)
        worst_rem = max(r["bounds"]["remainderNormalized"] / r["bounds"]["remainderBound"] for r in rows)
        morse_ok = all(r["morse"]["criticalCount"] == 2 and r["morse"]["certified"] for r in rows)
        counter = counterexample_report()
        counter_ok = counter["criticalCount"] == 4 and not counter["certified"]
        passed = all(r["passed"] for r in rows) and morse_ok and counter_ok and worst_g <= 1 and worst_rem <= 1
        measured = {
            "admissible": len(rows),
            "worstGkRatio": worst_g,
            "worstRemainderRatio": worst_rem,
            "morseAllTwo": morse_ok,
            "counterexampleCritical": counter["criticalCount"],
            "perK": [{"k": r["k"], "GkTildeNorm": r["bounds"]["GkTildeNorm"], "remainder": r["bounds"]["remainderNormalized"]} for r in rows],
        }
        return passed, measured, []

    return _timed(6, "effective potential bounds and Morse certification", 600, body)


def criterion_7_ks() -> list:
    cfg, _ = effpot_config()
    adm = cfg.admissible(EFFPOT_N)
    return adm[:: max(len(adm) // 4, 1)][:4]


def criterion_7(seed: int = DEFAULT_SEED, jobs: int = 1, ks=None) -> CriterionResult:
    def body():
        todo = list(ks) if ks is not None else criterion_7_ks()
        base = run_jobs(effpot_job, [(k, EFFPOT_K2) for k in todo], jobs)
        doubled = run_jobs(effpot_job, [(k, 2 * EFFPOT_K2) for k in todo], jobs)
        predicted = math.exp(-EFFPOT_K2 * EFFPOT_S / 8)
        ratios = [d["fStarStarHalf"] / b["fStarStarHalf"] for b, d in zip(base, doubled)]
        worst = max(ratios)
        passed = worst <= 10 * predicted
        return passed, {"predictedRatio": predicted, "worstMeasuredRatio": worst, "ks": [list(k) for k in todo], "ratios": ratios}, []

    return _timed(7, "remainder decay when K2 doubles", 600, body)


# 8. Genericity measure


GENERICITY_SWEEP = tuple((d, s) for d in (0.02, 0.05, 0.1, 0.2, 0.3) for s in (0.5, 1.0))


def criterion_8(seed: int = DEFAULT_SEED) -> CriterionResult:
    def body():
        rows = []
        for i, (delta, s) in enumerate(GENERICITY_SWEEP):
            rep = empirical_measure(ClassParams(s, 2, delta, constant_tail(0.0), 8), 2000, seed + i)
            rows.append({"delta": delta, "s": s, "outside": rep.fraction_outside, "bound": rep.bound_outside, "sigma": rep.sigma, "passed": rep.passed})
        slack = min(r["bound"] + 3 * r["sigma"] - r["outside"] for r in rows)
        return all(r["passed"] for r in rows), {"points": len(rows), "worstSlack": slack, "sweep": rows}, []

    return _timed(8, "genericity measure bound", 120, body)


# 9. Cartan bad set


def criterion_9(seed: int = DEFAULT_SEED) -> CriterionResult:
    def body():
        rows = []
        family = counterexample_family(2, 1.0, 8)
        for i, mu in enumerate((1e-1, 1e-2)):
            rep = cartan_bad_set(family, CartanParams(1.0, mu, (0.0, 0.0), 0.5), 20_000, seed + i)
            rows.append({"mu": mu, "estimate": rep.measure_estimate, "bound": rep.bound, "sigma": rep.sigma, "passed": rep.passed})
        summary = {
            "worstEstimate": max(r["estimate"] for r in rows),
            "smallestBound": min(r["bound"] for r in rows),
            "sweep": rows,
        }
        return all(r["passed"] for r in rows), summary, []

    return _timed(9, "Cartan bad-set measure", 120, body)


# 10. Pendulum reduction


PENDULUM_FIXTURES = (
    ("quadratic", (1, 1), ((0.5, -1.5), (0.5, 1.0))),
    ("anisotropic", (1, -2), ((-1.0, 0.1), (1.0, 0.1))),
    ("quartic", (2, 1), ((0.2, -1.0), (0.2, 1.0))),
)


def finite_difference_mk(h, k, y, step: float = 1e-4) -> float:
    kv = np.asarray(k, dtype=float)
    y = np.asarray(y, dtype=float)

    def val(t):
        return h(y + t * kv).real

    return (val(step) - 2 * val(0.0) + val(-step)) / step**2


def criterion_10(seed: int = DEFAULT_SEED) -> CriterionResult:
    def body():
        rows = []
        for name, k, seg in PENDULUM_FIXTURES:
            h = hamiltonian(name, 2)
            fk, eps = 0.3, 1e-4
            model = pendulum_reduce(h, k, seg, amplitude=2 * fk * eps, phase=0.7)
            fd = finite_difference_mk(h, k, model.y0)
            portrait = level_set_portrait(model)
            measured = portrait.measured_half_width()
            predicted = 2 * math.sqrt(2 * fk * eps / model.mk)
            rows.append({"fixture": name, "mk": model.mk, "mkFiniteDifference": fd, "halfWidth": measured, "predicted": predicted})
        ok = all(abs(r["mk"] - r["mkFiniteDifference"]) <= 1e-6 * max(1.0, abs(r["mk"])) and abs(r["halfWidth"] / r["predicted"] - 1) <= 0.01 for r in rows)
        return ok, {"fixtures": rows, "worstWidthError": max(abs(r["halfWidth"] / r["predicted"] - 1) for r in rows)}, []

    return _timed(10, "pendulum reduction", 10, body)


CRITERIA = {
    1: criterion_1,
    2: criterion_2,
    3: criterion_3,
    4: criterion_4,
    5: criterion_5,
    6: criterion_6,
    7: criterion_7,
    8: criterion_8,
    9: criterion_9,
    10: criterion_10,
}
PARALLEL = {6, 7}
