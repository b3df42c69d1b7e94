import cmath
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from simple_resonance.effective import (
    EffectiveConfig,
    calc_lemma_check,
    count_critical_points,
    example_potential,
    extract_Gk,
    first_harmonic,
    level_set_portrait,
    morse_check,
    pendulum_reduce,
    phase_and_modulus,
)
from simple_resonance.errors import CertificationFailed, ZeroCoefficient
from simple_resonance.fixtures import hamiltonian
from simple_resonance.fourier import FourierSeries
from simple_resonance.lattice import generators_up_to, l1
from simple_resonance.normal_form import AveragingConfig

complex_values = st.tuples(st.floats(-3, 3), st.floats(-3, 3)).map(lambda t: complex(*t)).filter(lambda z: abs(z) > 1e-6)


@given(complex_values, st.floats(0, 2 * math.pi))
def test_phase_reproduces_the_first_harmonic(fk, t):
    modulus, theta = phase_and_modulus(fk)
    assert 0 <= theta < 2 * math.pi
    lhs = (fk * cmath.exp(1j * t) + fk.conjugate() * cmath.exp(-1j * t)).real
    assert lhs == pytest.approx(2 * modulus * math.cos(t + theta), abs=1e-12)
    c, cbar = first_harmonic(modulus, theta)
    assert c == pytest.approx(fk)


def test_phase_examples():
    assert phase_and_modulus(0.5) == (0.5, 0.0)
    assert phase_and_modulus(0.5j)[1] == pytest.approx(math.pi / 2)
    assert phase_and_modulus(complex(2, 5e-324)) == (2.0, 0.0)
    assert phase_and_modulus(complex(1, -1e-300))[1] == 0.0
    assert morse_check(2.220446049250313e-16, {}, 0.5).maxima == [0.0]
    with pytest.raises(ZeroCoefficient):
        phase_and_modulus(0)


def test_extract_reindexes_lattice_modes():
    g = FourierSeries.cosine((2, 2), 1.0) + FourierSeries.cosine((1, 1), 0.5)
    G = extract_Gk(g, (1, 1))
    assert set(G.modes()) == {(1,), (-1,), (2,), (-2,)}
    with pytest.raises(ValueError):
        extract_Gk(g + FourierSeries.cosine((1, 0)), (1, 1))


def test_example_potential_coefficients():
    f, tail = example_potential(2, 0.5, 1.0, 10)
    for g in generators_up_to(2, 10):
        expected = 0.5 * l1(g) ** -2 * math.exp(-l1(g))
        assert f.coefficient(g).polynomial().constant_term() == pytest.approx(expected)
    assert (2, 2) not in f
    assert tail.cutoff == 10 and tail.decay == 1.0


def one_angle(coeffs):
    full = {}
    for j, c in coeffs.items():
        full[(j,)] = c
        full[(-j,)] = complex(c).conjugate()
    return FourierSeries(1, full, n_actions=2)


def test_zero_deviation_is_cosine():
    report = morse_check(0.3, {}, 0.5)
    assert report.certified and report.critical_count == 2
    assert report.maxima[0] == pytest.approx((-0.3) % (2 * math.pi))
    assert report.minima[0] == pytest.approx(math.pi - 0.3)


def test_small_second_harmonic_certified():
    G = one_angle({2: 0.005})
    report = morse_check(0.0, G, 0.8)
    assert report.certified and report.critical_count == 2
    maxima, minima = count_critical_points(0.0, {2: 0.005, -2: 0.005})
    assert len(maxima) == len(minima) == 1


def test_large_second_harmonic_rejected():
    G = one_angle({2: 0.45})
    with pytest.raises(CertificationFailed):
        morse_check(0.0, G, 0.9)
    report = morse_check(0.0, G, 0.9, strict=False)
    assert not report.certified and report.critical_count == 4


def test_two_harmonic_counterexample_has_four_critical_points():
    maxima, minima = count_critical_points(0.0, {2: 0.5, -2: 0.5})
    assert maxima == pytest.approx([0.0, math.pi])
    assert minima == pytest.approx(sorted([math.acos(-0.25), 2 * math.pi - math.acos(-0.25)]))


def circular_distance(a, b):
    d = abs(a - b) % (2 * math.pi)
    return min(d, 2 * math.pi - d)


@st.composite
def small_deviations(draw):
    gamma = 0.5
    coeffs = {}
    budget = gamma * draw(st.floats(0.0, 1.0))
    for j in (1, 2, 3):
        share = draw(st.floats(0.0, 1.0)) * budget
        budget -= share
        coeffs[j] = share / (2 * math.exp(2 * j)) * cmath.exp(1j * draw(st.floats(0, 2 * math.pi)))
    return coeffs, gamma


@given(small_deviations(), st.floats(0, 2 * math.pi))
def test_morse_certificate_is_sound(data, phase):
    coeffs, gamma = data
    report = morse_check(phase, one_angle(coeffs), gamma)
    assert report.certified and report.critical_count == 2
    both = {**coeffs, **{-j: c.conjugate() for j, c in coeffs.items()}}
    maxima, minima = count_critical_points(phase, both)
    assert len(maxima) == 1 and len(minima) == 1
    assert circular_distance(maxima[0], report.maxima[0]) <= 1e-8
    assert circular_distance(minima[0], report.minima[0]) <= 1e-8
    assert all(0 <= t < 2 * math.pi for t in report.maxima + report.minima)


def finite_difference_mk(h, k, y, step=1e-4):
    kv = np.asarray(k, float)
    return (h(y + step * kv).real - 2 * h(y).real + h(y - step * kv).real) / step**2


@pytest.mark.parametrize(
    "name,k,segment",
    [
        ("quadratic", (1, 1), ((0.5, -1.5), (0.5, 1.0))),
        ("anisotropic", (1, -2), ((-1.0, 0.1), (1.0, 0.1))),
        ("quartic", (2, 1), ((0.2, -1.0), (0.2, 1.0))),
    ],
)
def test_pendulum_reduction(name, k, segment):
    h = hamiltonian(name, 2)
    model = pendulum_reduce(h, k, segment, amplitude=2e-4, phase=1.1)
    grad = [g(model.y0).real for g in h.gradient()]
    assert abs(np.dot(grad, k)) <= 1e-10
    assert model.mk == pytest.approx(finite_difference_mk(h, k, np.array(model.y0)), abs=1e-6)
    # the last frame action is y . A^{-T} row, so Y0 maps back to y0
    A = np.array(model.frame["A"])
    assert A.T @ np.array(model.Y0) == pytest.approx(model.y0)
    portrait = level_set_portrait(model)
    assert portrait.measured_half_width() == pytest.approx(2 * math.sqrt(2e-4 / model.mk), rel=0.01)


def test_pendulum_segment_must_cross():
    with pytest.raises(ValueError):
        pendulum_reduce(hamiltonian("quadratic", 2), (1, 0), ((0.1, 0.0), (0.5, 0.0)), 1e-4)


def test_zero_amplitude_portrait_is_flat():
    model = pendulum_reduce(hamiltonian("quadratic", 2), (1, 0), ((-1, 0.3), (1, 0.3)), 0.0)
    portrait = level_set_portrait(model)
    assert np.ptp(portrait.energy, axis=0).max() == 0.0
    assert portrait.measured_half_width() == 0.0


def test_portrait_csv_header():
    model = pendulum_reduce(hamiltonian("quadratic", 2), (1, 0), ((-1, 0.3), (1, 0.3)), 1e-3)
    text = level_set_portrait(model, 10, 8).csv()
    lines = text.splitlines()
    assert lines[0].startswith("# separatrix_energy=")
    assert lines[3] == "X,Y,energy"
    assert len(lines) == 4 + 80


@given(st.floats(1.4, 6), st.floats(0.0, 1.0), st.floats(1.0, 50.0))
def test_calculus_lemma(a, u, stretch):
    eps = math.exp(-a * a / 2) * max(u, 1e-3) * 0.999
    t = 4 * math.log(1 / eps) * stretch + 1e-9
    check = calc_lemma_check(a, eps, t)
    if check.hypotheses:
        assert check.holds


def test_calculus_lemma_hypotheses_flagged():
    assert not calc_lemma_check(1.0, 0.1, 100.0).hypotheses


def test_effective_config_admissible_range():
    cfg = EffectiveConfig(0.95, 0.5, AveragingConfig(s=1.0, K1=28, K2=84, nu=10))
    adm = cfg.admissible(2)
    assert adm and all(l1(k) == 28 for k in adm)
    assert cfg.tau0(2) == pytest.approx(4 * math.log(math.e + 2**9 / (0.95 * 0.5)))
