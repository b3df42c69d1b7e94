import itertools
import math
from functools import reduce

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from simple_resonance.lattice import (
    bezout_matrix,
    enumerate_modes,
    factor_mode,
    generators_up_to,
    in_lattice,
    integer_det,
    integer_inverse,
    is_generator,
    l1,
    on_line,
    resonance_frame,
    vector_gcd,
)

vectors = st.integers(2, 5).flatmap(lambda n: st.lists(st.integers(-40, 40), min_size=n, max_size=n)).filter(any)


def brute_gcd(k):
    return reduce(math.gcd, map(abs, k), 0)


def totient(m):
    return sum(1 for j in range(1, m + 1) if math.gcd(j, m) == 1)


@given(vectors)
def test_bezout_rows_determinant_and_size(k):
    A = bezout_matrix(k)
    assert tuple(A[-1]) == tuple(k)
    assert integer_det(A) == brute_gcd(k)
    assert np.abs(A).max() == max(map(abs, k))


@given(vectors)
def test_integer_det_matches_float_det(k):
    A = bezout_matrix(k)
    assert integer_det(A) == round(np.linalg.det(A.astype(float)))


def test_bezout_example_det_two():
    assert integer_det(bezout_matrix((2, 4))) == 2


def test_one_dimensional_negative_has_no_positive_determinant():
    # the only 1x1 matrix with last row (-3) is [-3]
    A = bezout_matrix((-3,))
    assert A.tolist() == [[-3]]
    assert integer_det(A) == -3


@given(vectors.filter(lambda k: brute_gcd(k) == 1))
def test_frame_is_unimodular_and_symplectic(k):
    frame = resonance_frame(k)
    assert (frame.A @ frame.A_inv == np.eye(len(k), dtype=np.int64)).all()
    rng = np.random.default_rng(len(k))
    x, y = rng.normal(size=len(k)), rng.normal(size=len(k))
    X, Y = frame.angles_to_frame(x), frame.actions_to_frame(y)
    assert X[-1] == pytest.approx(np.dot(k, x))
    assert np.dot(X, Y) == pytest.approx(np.dot(x, y))
    assert frame.angles_from_frame(X) == pytest.approx(x)
    assert frame.actions_from_frame(Y) == pytest.approx(y)


def test_frame_rejects_non_primitive():
    with pytest.raises(ValueError):
        resonance_frame((2, 4))


def test_integer_inverse_rejects_non_unimodular():
    with pytest.raises(ValueError):
        integer_inverse(np.array([[2, 0], [0, 1]]))


@given(vectors)
def test_factor_mode(k):
    j, g = factor_mode(k)
    assert tuple(j * c for c in g) == tuple(k)
    assert is_generator(g)


@pytest.mark.parametrize("n,K", [(1, 5), (2, 6), (3, 4)])
def test_enumerate_modes_matches_product(n, K):
    brute = {v for v in itertools.product(range(-K, K + 1), repeat=n) if sum(map(abs, v)) <= K}
    modes = enumerate_modes(n, K)
    assert len(modes) == len(set(modes)) == len(brute)
    assert set(modes) == brute


@pytest.mark.parametrize("K", [1, 5, 12])
def test_planar_generator_count_is_totient_sum(K):
    # primitive vectors with |k|_1 = m >= 2 number 4 phi(m); half are in Z^n_*
    expected = 2 + sum(2 * totient(m) for m in range(2, K + 1))
    assert len(generators_up_to(2, K)) == expected


def test_generators_are_primitive_and_positive():
    for g in generators_up_to(3, 5):
        assert brute_gcd(g) == 1
        first = next(c for c in g if c)
        assert first > 0
        assert l1(g) <= 5


@given(vectors, st.lists(st.integers(-6, 6), min_size=5, max_size=5))
def test_in_lattice_matches_rank_oracle(k, other):
    _, g = factor_mode(k)
    mode = tuple(other[: len(g)])
    # m in Z g  iff  [g; m] has rank one (g primitive makes the multiple an integer)
    expected = np.linalg.matrix_rank(np.array([g, mode], dtype=float)) <= 1
    assert in_lattice(mode, g) == expected
    assert on_line(np.array([mode]), g)[0] == expected
    assert in_lattice(tuple(3 * c for c in g), g)


def test_trivial_lattice_is_origin():
    assert in_lattice((0, 0), None)
    assert not in_lattice((1, 0), None)


def test_vector_gcd_zero():
    assert vector_gcd((0, 0)) == 0
