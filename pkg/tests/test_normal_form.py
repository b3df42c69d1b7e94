import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from simple_resonance.acceptance import coupled_fixture
from simple_resonance.errors import SmallnessViolated
from simple_resonance.fourier import FourierSeries, fourier_norm_l1, project_lattice, project_lattice_complement, truncate
from simple_resonance.lattice import enumerate_modes, l1
from simple_resonance.normal_form import (
    AnalyticTail,
    AveragingConfig,
    BoundCheck,
    Budget,
    certified_alpha,
    compose_flows,
    divisor_map,
    hamiltonian_flow,
    homological_residual,
    lemma_log_sum,
    lie_transform,
    normal_form,
    solve_homological,
    word_weight,
)

LATTICE, K = (1, 0), 6


@pytest.fixture(scope="module")
def strict_run():
    h, f, domain = coupled_fixture(1e-8)
    alpha = certified_alpha(divisor_map(h), domain, LATTICE, K)
    return h, f, normal_form(h, f, LATTICE, K, domain, alpha, strict=True)


def test_homological_residual_vanishes():
    h, f, domain = coupled_fixture(1e-3)
    fK = project_lattice_complement(truncate(f, K)[0], LATTICE)
    phi = solve_homological(h, fK)
    resid, norm = homological_residual(h, fK, phi, domain)
    assert resid <= 1e-12 * norm


def test_homological_rejects_mean():
    h, _, _ = coupled_fixture(1.0)
    with pytest.raises(ValueError):
        solve_homological(h, FourierSeries.from_polynomial(h))


@given(st.floats(0.01, 0.99), st.integers(1, 6))
def test_word_weight_matches_direct_series(a, level):
    terms = (math.exp(math.lgamma(j) - math.lgamma(level + j + 1) + j * math.log(a)) for j in range(1, 20000))
    direct = 4 / math.e**2 * math.fsum(terms)
    value = word_weight(level, a)
    assert value >= direct * (1 - 1e-14)
    assert value == pytest.approx(direct, rel=1e-12)


def test_word_weight_edges():
    assert word_weight(2, 0.0) == 0.0
    assert word_weight(2, 1.0) == math.inf


@given(st.floats(0.01, 0.95), st.integers(1, 5))
def test_lemma_log_sum_matches_series(a, start):
    direct = sum(a**m / m for m in range(start, 3000))
    assert lemma_log_sum(a, start) == pytest.approx(direct, rel=1e-9, abs=1e-15)


@pytest.mark.parametrize("cutoff", [3, 10])
def test_analytic_tail_matches_explicit_sum(cutoff):
    tail = AnalyticTail(2, cutoff, 0.5, 1.0)
    explicit = sum(0.5 * l1(k) ** -2 * math.exp(-l1(k) * 0.6) for k in enumerate_modes(2, cutoff + 120) if l1(k) > cutoff)
    value = tail.norm(0.4)
    assert value >= explicit
    assert value == pytest.approx(explicit, rel=1e-9)


def test_analytic_tail_diverges_at_decay():
    assert AnalyticTail(2, 5, 1.0, 1.0).norm(1.0) == math.inf


def test_lie_series_against_flow():
    h, f, domain = coupled_fixture(1e-5)
    fK = project_lattice_complement(truncate(f, K)[0], LATTICE)
    phi = solve_homological(h, fK)
    H = FourierSeries.from_polynomial(h) + f
    u, report = lie_transform(H, phi, domain, 0.02, 0.2)
    assert report.theta_hat < 1
    rng = np.random.default_rng(1)
    for _ in range(3):
        y = np.array(domain.center) + rng.uniform(-0.01, 0.01, 2)
        x = rng.uniform(0, 2 * np.pi, 2)
        Y, X = hamiltonian_flow(phi, y, x)
        assert u.evaluate(y, x).real == pytest.approx(H.evaluate(Y, X).real, abs=1e-12)


def test_lie_series_smallness_enforced():
    h, f, domain = coupled_fixture(1.0)
    fK = project_lattice_complement(truncate(f, K)[0], LATTICE)
    phi = solve_homological(h, fK)
    with pytest.raises(SmallnessViolated):
        lie_transform(FourierSeries.from_polynomial(h), phi, domain, 0.02, 0.2)


def test_strict_normal_form_passes_every_check(strict_run):
    _, _, res = strict_run
    assert res.hypotheses_met
    failed = [(c.name, c.lhs, c.rhs) for c in res.failed_checks()]
    assert not failed


def test_step_thetas_decay_below_limits(strict_run):
    _, _, res = strict_run
    steps = [c for c in res.checks if c.name.startswith("theta_")]
    assert len(steps) == K
    assert all(c.passed for c in steps)
    values = [c.lhs for c in steps]
    assert all(b < a for a, b in zip(values, values[1:]))


def test_normal_form_structure(strict_run):
    _, _, res = strict_run
    assert project_lattice(res.g, LATTICE) == res.g
    # everything left outside the lattice is high-order or at high modes
    low, _ = truncate(project_lattice_complement(res.f_star_star, LATTICE), K)
    assert fourier_norm_l1(low, res.domain_out).value <= res.norms["lowPerpFStar"] * (1 + 1e-9) + 1e-30


def test_conjugation_matches_integrated_flows(strict_run):
    h, f, res = strict_run
    H = FourierSeries.from_polynomial(h) + f
    new = FourierSeries.from_polynomial(h) + res.g + res.f_star_star
    rng = np.random.default_rng(0)
    out = res.domain_out
    for _ in range(3):
        y = np.array(out.center) + rng.uniform(-0.01, 0.01, 2)
        x = rng.uniform(0, 2 * np.pi, 2)
        Y, X = compose_flows(res.generators, y, x)
        change = abs(new.evaluate(y, x) - H.evaluate(y, x))
        assert change > 1e-10
        assert abs(H.evaluate(Y, X).real - new.evaluate(y, x).real) <= 1e-6 * change + res.dark


def test_explore_mode_reports_instead_of_raising():
    h, f, domain = coupled_fixture(1e-5)
    alpha = certified_alpha(divisor_map(h), domain, LATTICE, K)
    with pytest.raises(SmallnessViolated):
        normal_form(h, f, LATTICE, K, domain, alpha, strict=True)
    res = normal_form(h, f, LATTICE, K, domain, alpha, strict=False)
    assert not res.hypotheses_met and res.warnings


def test_ledger_csv_has_one_row_per_step(strict_run):
    _, _, res = strict_run
    rows = res.ledger_csv().strip().splitlines()
    assert len(rows) == len(res.steps) + 1


def test_budget_total():
    assert Budget(1.0, 2.5).total == 3.5


def test_logarithmic_bound_check():
    assert BoundCheck.logarithmic("x", 1e-300, -600.0, True).passed
    assert not BoundCheck.logarithmic("x", 1e-300, -800.0, True).passed


def test_averaging_hypotheses():
    cfg = AveragingConfig(s=1.0, K1=2, K2=6, nu=8)
    assert cfg.hypotheses(2, 1e-17) == []
    assert "epsilon small enough for the complex widening" in cfg.hypotheses(2, 1e-3)
    assert cfg.alpha(1e-16) == pytest.approx(1e-8 * 6**8)
