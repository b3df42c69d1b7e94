import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from simple_resonance.fourier import (
    DomainSpec,
    FourierSeries,
    bracket_norm_bound_check,
    cauchy_estimate_check,
    compress,
    decompose_generators,
    fourier_norm_inf,
    fourier_norm_l1,
    lift_one_d,
    norm_comparison_check,
    one_d_projection,
    poisson_bracket,
    project_lattice,
    project_lattice_complement,
    reconstruct,
    sup_norm_sampled,
    truncate,
)
from simple_resonance.errors import NonZeroMean
from simple_resonance.polynomial import YPolynomial, quadratic_form

DOMAIN = DomainSpec.ball((0.2, 0.5), 0.1, 0.1, 0.4)

modes = st.tuples(st.integers(-3, 3), st.integers(-3, 3)).filter(any)
amps = st.floats(0.05, 2.0)


@st.composite
def series(draw, with_y=True):
    total = FourierSeries.zero(2)
    for _ in range(draw(st.integers(1, 4))):
        k = draw(modes)
        a = draw(amps)
        part = FourierSeries.cosine(k, a) if draw(st.booleans()) else FourierSeries.sine(k, a)
        if with_y and draw(st.booleans()):
            poly = YPolynomial(2, {(1, 0): draw(st.floats(-1, 1)), (0, 0): 1.0})
            part = part * FourierSeries.from_polynomial(poly)
        total = total + part
    return total


def point(seed):
    rng = np.random.default_rng(seed)
    return np.array(DOMAIN.center) + rng.uniform(-0.05, 0.05, 2), rng.uniform(0, 2 * np.pi, 2)


def test_cosine_norms():
    f = FourierSeries.cosine((1, -2), 3.0)
    dom = DomainSpec.ball((0, 0), 0.1, 0.1, 0.7)
    assert fourier_norm_l1(f, dom).value == pytest.approx(3.0 * math.exp(3 * 0.7))
    assert fourier_norm_inf(f, dom).value == pytest.approx(1.5 * math.exp(3 * 0.7))


@given(series())
def test_sampled_sup_below_l1(f):
    assert sup_norm_sampled(f, DOMAIN, 128).value <= fourier_norm_l1(f, DOMAIN).value * (1 + 1e-12)


@given(series(), series(), st.integers(0, 1000))
def test_bracket_matches_finite_differences(f, g, seed):
    y, x = point(seed)
    h = 1e-6

    def d(series_, kind, i):
        e = np.zeros(2)
        e[i] = h
        if kind == "x":
            return (series_.evaluate(y, x + e) - series_.evaluate(y, x - e)) / (2 * h)
        return (series_.evaluate(y + e, x) - series_.evaluate(y - e, x)) / (2 * h)

    expected = sum(d(f, "x", i) * d(g, "y", i) - d(f, "y", i) * d(g, "x", i) for i in range(2))
    assert poisson_bracket(f, g).evaluate(y, x) == pytest.approx(expected, abs=1e-5)


@given(series(), series())
def test_bracket_antisymmetric(f, g):
    assert (poisson_bracket(f, g) + poisson_bracket(g, f)).is_zero() or fourier_norm_l1(
        poisson_bracket(f, g) + poisson_bracket(g, f), DOMAIN
    ).value < 1e-12


@given(series(), series())
def test_bracket_norm_estimate(f, g):
    lhs, rhs, ok = bracket_norm_bound_check(f, g, DOMAIN, DOMAIN, 0.04, 0.1)
    assert ok, (lhs, rhs)


@given(series())
def test_cauchy_estimates(f):
    report = cauchy_estimate_check(f, DOMAIN, 0.04, 0.1)
    assert report["holds"]


@given(series(), st.integers(1, 4))
def test_truncate_splits(f, N):
    low, high = truncate(f, N)
    assert low + high == f
    assert all(sum(map(abs, k)) <= N for k in low)
    assert all(sum(map(abs, k)) > N for k in high)


@given(series())
def test_lattice_projection_splits(f):
    k = (1, 1)
    on, off = project_lattice(f, k), project_lattice_complement(f, k)
    assert on + off == f
    assert all(m[0] == m[1] for m in on)


@given(series(with_y=False))
def test_one_dimensional_projection_round_trip(f):
    k = (1, -1)
    F = one_d_projection(f, k)
    assert lift_one_d(F, k) == project_lattice(f, k).filter(any)


@given(series())
def test_generator_decomposition_round_trip(f):
    f = f.filter(any)
    assert reconstruct(decompose_generators(f), 2) == f


def test_decomposition_rejects_mean():
    with pytest.raises(NonZeroMean):
        decompose_generators(FourierSeries.from_polynomial(YPolynomial.constant(2, 1.0)))


@given(series())
def test_json_round_trip(f):
    assert FourierSeries.loads(f.dumps()) == f


@given(series())
def test_real_series_evaluate_real(f):
    y, x = point(3)
    assert abs(f.evaluate(y, x).imag) < 1e-12


def test_norm_comparison_lemma():
    f = FourierSeries.cosine((1, 0)) + FourierSeries.cosine((2, 3), 0.5)
    assert norm_comparison_check(f, DOMAIN, 0.1)


def test_compress_reports_dropped_mass():
    f = FourierSeries.cosine((1, 0)) + FourierSeries.cosine((3, 0), 1e-14)
    kept, dropped = compress(f, DOMAIN, 1e-10)
    assert (3, 0) not in kept
    assert dropped >= fourier_norm_l1(f - kept, DOMAIN).value * (1 - 1e-12)


def test_derivatives_of_quadratic():
    h = FourierSeries.from_polynomial(quadratic_form(np.eye(2)))
    y = np.array([0.3, -0.4])
    assert h.derivative_y(0).evaluate(y, [0, 0]) == pytest.approx(0.3)
    assert h.derivative_x(0).is_zero()
