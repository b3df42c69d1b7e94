import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from simple_resonance.errors import CoveringGap, DimensionMismatch
from simple_resonance.fixtures import hamiltonian
from simple_resonance.resonance import (
    CoveringParams,
    FrequencyMap,
    classify,
    classify_frequencies,
    complex_widening_check,
    dist_double_resonance,
    double_resonance_distance_bound,
    in_omega0,
    in_omega1k,
    in_omega2kl,
    measure_estimate_D2,
    pair_measure_bound,
    raster,
    verify_batch,
    verify_nonresonance,
)

P = CoveringParams(0.02, 3, 9, M=4.0)
OMEGA = FrequencyMap(hamiltonian("quadratic", 2).gradient())


def test_parameters_reject_zero_alpha():
    with pytest.raises(ValueError):
        CoveringParams(0.0, 3, 9, 1.0)


def test_parameters_reject_bad_cutoffs():
    with pytest.raises(ValueError):
        CoveringParams(0.1, 4, 3, 1.0)


def test_theorem_level_constraints():
    assert CoveringParams(0.1, 2, 6, 1.0, nu=4).theorem_level(2) == []
    assert "K2 >= 3 K1 >= 6" in CoveringParams(0.1, 3, 6, 1.0, nu=4).theorem_level(2)


def test_nonresonant_point_in_d0():
    w = (1.0, math.sqrt(2) - 1.0)
    ok, cert = in_omega0(w, P)
    assert ok and cert.divisor > P.alpha / 2
    report = classify(w, OMEGA, P)
    assert report.in_d0 and verify_nonresonance(report, P)


def test_simple_resonance_point_in_d1():
    w = (0.0, 0.8)
    ok, cert = in_omega1k(w, (1, 0), P)
    assert ok and cert.divisor > cert.threshold
    report = classify(w, OMEGA, P)
    assert (1, 0) in report.d1 and not report.in_d0
    assert verify_nonresonance(report, P)


def test_origin_is_double_resonant():
    assert in_omega2kl((0.0, 0.0), (1, 0), (0, 1), P)
    report = classify((0.0, 0.0), OMEGA, P)
    assert report.d2 and report.label == "D2"


def test_outside_frequency_ball_is_a_gap():
    with pytest.raises(CoveringGap):
        classify((10.0, 0.0), OMEGA, P)


def test_dimension_checked():
    with pytest.raises(DimensionMismatch):
        in_omega0((1.0, 2.0), P, n=3)


@given(st.floats(-2, 2), st.floats(-2, 2))
def test_every_frequency_in_the_ball_is_covered(a, b):
    w = np.array([[a, b]])
    batch = classify_frequencies(w, P)
    assert batch.covered[0]
    assert verify_batch(batch, P)[0]


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
def test_three_dimensional_covering(a, b, c):
    p = CoveringParams(0.05, 2, 6, M=4.0)
    batch = classify_frequencies(np.array([[a, b, c]]), p)
    assert batch.covered[0] and verify_batch(batch, p)[0]


@given(st.floats(-1, 1), st.floats(-1, 1))
def test_double_resonance_distance_is_plane_projection(a, b):
    # in the plane every vector lies in span(k, l): the distance is the norm
    w = (a, b)
    assert dist_double_resonance(w, (1, 1), (1, -2)) == pytest.approx(math.hypot(a, b), abs=1e-12)


def test_double_resonance_distance_in_space():
    w = np.array([0.3, -0.2, 0.5])
    k, ell = np.array([1, 0, 0]), np.array([0, 1, 0])
    assert dist_double_resonance(w, k, ell) == pytest.approx(math.hypot(0.3, 0.2))


def test_double_resonant_points_are_near_the_resonance():
    rng = np.random.default_rng(4)
    ws = rng.uniform(-0.3, 0.3, size=(4000, 2))
    batch, pairs, hits = classify_frequencies(ws, P, pair_detail=True)
    for col, (k, ell) in enumerate(pairs):
        for w in ws[hits[:, col]]:
            assert dist_double_resonance(w, k, ell) <= double_resonance_distance_bound(k, ell, P)


def test_pair_measure_bound_scales_quadratically():
    half = CoveringParams(P.alpha / 2, P.K1, P.K2, P.M)
    assert pair_measure_bound(2, (1, 1), P) == pytest.approx(4 * pair_measure_bound(2, (1, 1), half))


def test_measure_estimate_requires_samples():
    with pytest.raises(ValueError):
        measure_estimate_D2(OMEGA, (0.3, 0.2), 0.3, P, 10, 0)


def test_raster_labels():
    ys, labels = raster(OMEGA, (-1, -1), (1, 1), 21, P)
    assert ys.shape == (441, 2)
    assert set(labels.tolist()) <= {"D0", "D1", "D2", "outside", "none"}
    assert "none" not in labels.tolist()


def test_complex_widening_small_radius_holds():
    ys = np.array([[1.0, math.sqrt(2) - 1.0]])
    modes = np.array([[1, 0], [0, 1], [1, 1], [1, -1]])
    threshold = float(np.abs(OMEGA.evaluate_many(ys) @ modes.T).min())
    holds, smallest, reduced = complex_widening_check(ys, OMEGA, modes, threshold, 1e-3, 1.0)
    assert holds and smallest >= reduced
