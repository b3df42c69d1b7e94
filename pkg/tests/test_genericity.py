import dataclasses
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from simple_resonance.fourier import FourierSeries
from simple_resonance.genericity import (
    CartanParams,
    ClassParams,
    GateParams,
    ball_volume,
    cartan_bad_set,
    class_defect_sum,
    constant_tail,
    counterexample_family,
    empirical_measure,
    action_dependent_constants,
    in_class,
    read_jsonl,
    sample_unit_ball,
    sphere_measure,
    tail_tau0,
    tail_taustar,
    tail_taustar_terms,
    tau0_function,
    action_dependent_gate,
    write_jsonl,
)
from simple_resonance.lattice import l1


def test_tau0_examples():
    # 4 ln(e + 512) and 2 ln(e + 128), frozen from a 30-digit decimal evaluation
    assert tail_tau0(1.0, 1.0, 1.0, 2) == pytest.approx(24.974478901659409, rel=1e-14)
    assert tail_tau0(1.0, 1.0, 2.0, 2) == pytest.approx(9.7460889742363476, rel=1e-14)


@given(st.floats(1e-6, 1.0), st.floats(1e-6, 1.0))
def test_tails_shrink_as_delta_grows(d1, d2):
    lo, hi = sorted((d1, d2))
    assert tail_tau0(lo, 0.5, 1.0, 2) >= tail_tau0(hi, 0.5, 1.0, 2)
    assert tail_taustar(lo, 0.5, 1e-4, 1.0, 2) >= tail_taustar(hi, 0.5, 1e-4, 1.0, 2)


def test_taustar_structure():
    terms = tail_taustar_terms(0.1, 0.5, 1e-4, 1.0, 2)
    assert terms[0] == pytest.approx(math.log(256) ** 3)
    assert tail_taustar(0.1, 0.5, 1e-4, 1.0, 2) == pytest.approx(256 * max(terms))
    # widths above one are capped
    assert tail_taustar(0.1, 0.5, 1e-4, 3.0, 2) == tail_taustar(0.1, 0.5, 1e-4, 1.0, 2)
    assert tail_taustar(0.1, 0.5, 1e-3, 1.0, 2) <= tail_taustar(0.1, 0.5, 1e-4, 1.0, 2)
    assert tau0_function(0.5, 1.0, 2).is_monotone()


def example_series(n, delta, s, cutoff, scale=1.0):
    from simple_resonance.effective import example_potential

    f, _ = example_potential(n, delta * scale, s, cutoff)
    return f


def test_example_potential_sits_on_the_class_boundary():
    p = ClassParams(1.0, 2, 0.5, constant_tail(0.0), 10)
    assert in_class(example_series(2, 0.5, 1.0, 10), p)
    below = in_class(example_series(2, 0.5, 1.0, 10, scale=0.999), p)
    assert not below and l1(below.witness) == 1


def test_class_tail_and_cutoff():
    f = FourierSeries.cosine((1, 0), 1e-9)
    assert in_class(f, ClassParams(1.0, 2, 0.5, constant_tail(1.0), 1)).vacuous
    assert not in_class(f, ClassParams(1.0, 2, 0.5, constant_tail(0.0), 1))


@settings(max_examples=30)
@given(st.floats(0.01, 0.5), st.floats(0.01, 0.5), st.integers(0, 2**31))
def test_class_shrinks_with_delta(d1, d2, seed):
    lo, hi = sorted((d1, d2))
    f = sample_unit_ball(1.0, 2, 5, seed)
    tail = constant_tail(0.0)
    if in_class(f, ClassParams(1.0, 2, hi, tail, 5)):
        assert in_class(f, ClassParams(1.0, 2, lo, tail, 5))


def test_sampled_series_lie_in_the_unit_ball():
    for seed in range(20):
        f = sample_unit_ball(0.7, 2, 6, seed)
        for k in f.modes():
            c = f.coefficient(k).polynomial().constant_term()
            assert abs(c) * math.exp(0.7 * l1(k)) <= 1 + 1e-12
            assert f.coefficient(tuple(-v for v in k)).polynomial().constant_term() == pytest.approx(complex(c).conjugate())


def test_jsonl_roundtrip_and_seed_determinism():
    series = [sample_unit_ball(1.0, 2, 4, seed) for seed in range(3)]
    text = write_jsonl(series)
    assert write_jsonl(read_jsonl(text)) == text
    assert sample_unit_ball(1.0, 2, 4, 0).dumps() == series[0].dumps()
    assert sample_unit_ball(1.0, 2, 4, 1).dumps() != series[0].dumps()


def test_empirical_measure_matches_exact_product():
    # each active coordinate is uniform on the disk, so P(|z| >= t) = 1 - t^2 exactly
    p = ClassParams(1.0, 2, 0.3, constant_tail(0.0), 4)
    exact = 1.0
    for g in p.active_generators():
        exact *= 1 - (0.3 * l1(g) ** -2) ** 2
    rep = empirical_measure(p, 200_000, 7)
    assert abs(rep.fraction_inside - exact) <= 4 * rep.sigma + 1e-12
    assert 1 - exact <= class_defect_sum(p) + 1e-15
    assert rep.passed


def test_volume_helpers():
    assert sphere_measure(2) == pytest.approx(2 * math.pi)
    assert sphere_measure(3) == pytest.approx(4 * math.pi)
    assert ball_volume(3, 2.0) == pytest.approx(4 / 3 * math.pi * 8)


def slab_union_area(centres_halfwidths, rho):
    """Exact area of a union of vertical slabs |y1 - c| < w inside the disc of radius rho at the origin."""
    intervals = sorted((max(c - w, -rho), min(c + w, rho)) for c, w in centres_halfwidths if c + w > -rho and c - w < rho)
    merged = []
    for a, b in intervals:
        if merged and a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])

    def primitive(x):
        return x * math.sqrt(rho * rho - x * x) + rho * rho * math.asin(x / rho)

    return sum(primitive(b) - primitive(a) for a, b in merged)


@dataclasses.dataclass(frozen=True)
class WideCartan(CartanParams):
    """Inflated thresholds so the Monte-Carlo engine has something to measure."""

    width: float = 0.05

    def threshold(self, k):
        return self.width / l1(k)


def test_cartan_engine_matches_exact_slab_area():
    r = 1.0
    family = counterexample_family(2, r, 6)
    cp = WideCartan(r, 1e-4, (0.0, 0.0), 0.5)
    rep = cartan_bad_set(family, cp, 200_000, 3)
    # |g_k| < t  iff  |y1 - r |k|^-n| < 2 r t
    exact = slab_union_area([(r * l1(k) ** -2, 2 * r * cp.threshold(k)) for k, _ in family], r / (2 * math.e))
    assert exact > 0.01
    assert abs(rep.measure_estimate - exact) <= 4 * rep.sigma


@pytest.mark.parametrize("mu", [1.0, 0.1])
def test_counterexample_bad_set_is_below_the_bound(mu):
    r = 1.0
    family = counterexample_family(2, r, 8)
    cp = CartanParams(r, mu, (0.0, 0.0), 0.5)
    exact = slab_union_area([(r * l1(k) ** -2, 2 * r * cp.threshold(k)) for k, _ in family], r / (2 * math.e))
    rep = cartan_bad_set(family, cp, 20_000, 11)
    assert exact <= rep.bound
    assert rep.passed


def test_cartan_normalization_enforced():
    family = counterexample_family(2, 1.0, 3)
    with pytest.raises(ValueError):
        cartan_bad_set(family, CartanParams(1.0, 0.1, (0.9, 0.0), 0.5), 10, 0)


def test_gate_constants_and_failures():
    mu_t, n_t, kappa = action_dependent_constants(2, 1.0, 1.0, 10, 1e-4)
    assert kappa == 262144
    assert n_t == 13
    assert mu_t == pytest.approx(1e-4 / (30 * math.e**3))
    rep = action_dependent_gate(GateParams(2, 1.0, 1.0, 10, 2, 6, 1e-4, 0.5, 1e-4))
    assert not rep.passed
    failing = {t.name for t in rep.terms if not t.passed}
    assert "K2 >= 2^14 n^4 / s^2" in failing
    assert rep.required_K2() >= 2**18


def test_gate_nonpositive_exponent():
    rep = action_dependent_gate(GateParams(2, 1.0, 1.0, 3.5, 2, 6, 1e-4, 0.5, 1e-4))
    assert not rep.passed and rep.terms[-1].name == "n_tilde > 0"
