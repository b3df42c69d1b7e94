import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from simple_resonance.polynomial import YPolynomial, quadratic_form

coeff = st.floats(-3, 3, allow_nan=False)
polys = st.dictionaries(st.tuples(st.integers(0, 3), st.integers(0, 3)), coeff, max_size=6).map(lambda t: YPolynomial(2, t))
points = st.tuples(st.floats(-1, 1), st.floats(-1, 1))


@given(polys, polys, points)
def test_ring_operations_match_pointwise(p, q, y):
    assert (p * q)(y) == pytest.approx(p(y) * q(y), abs=1e-9)
    assert (p + q)(y) == pytest.approx(p(y) + q(y), abs=1e-12)
    assert (p - q)(y) == pytest.approx(p(y) - q(y), abs=1e-12)


@given(polys, points)
def test_derivative_matches_central_difference(p, y):
    h = 1e-5
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        fd = (p(np.array(y) + e) - p(np.array(y) - e)) / (2 * h)
        assert p.derivative(i)(y) == pytest.approx(fd, abs=1e-6)


@given(polys, points)
def test_shift_is_translation(p, y):
    c = (0.3, -0.2)
    assert p.shift(c)(y) == pytest.approx(p(np.array(y) + np.array(c)), abs=1e-9)


@given(polys)
def test_sup_bound_dominates_samples(p):
    rng = np.random.default_rng(0)
    center, radius = np.array([0.2, -0.1]), 0.4
    z = rng.normal(size=(200, 2)) + 1j * rng.normal(size=(200, 2))
    z /= np.linalg.norm(z, axis=1)[:, None]
    z *= radius * rng.uniform(size=(200, 1))
    vals = np.abs(p.evaluate_many(center + z))
    assert vals.max(initial=0.0) <= p.sup_bound(center, radius) * (1 + 1e-12) + 1e-12


def test_quadratic_form_gradient():
    A = np.array([[2.0, 1.0], [1.0, 3.0]])
    h = quadratic_form(A)
    y = np.array([0.4, -0.7])
    grad = [g(y).real for g in h.gradient()]
    assert grad == pytest.approx(A @ y)
    assert h(y).real == pytest.approx(0.5 * y @ A @ y)


def test_evaluate_many_matches_scalar():
    p = YPolynomial(2, {(2, 1): 1.5, (0, 0): -1.0})
    pts = np.array([[0.1, 0.2], [1.0, -1.0]])
    assert p.evaluate_many(pts) == pytest.approx([p(r) for r in pts])
