import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncmogp.moments import (
    ExponentVector,
    MomentMatrix,
    enumerate_moment_matrices,
    pair_moment_coefficient,
    pairings,
    product_moment,
    product_moment_unit,
)


def random_cov(rng, c):
    A = rng.standard_normal((c, c))
    return A @ A.T / c + 0.1 * np.eye(c)


def brute_force_count(a):
    """Count symmetric non-negative integer matrices satisfying the row condition."""
    c = len(a)
    cells = [(i, j) for i in range(c) for j in range(i, c)]
    count = 0
    ranges = [range(a[i] // 2 + 1) if i == j else range(min(a[i], a[j]) + 1) for i, j in cells]
    for vals in itertools.product(*ranges):
        row = [0] * c
        for (i, j), v in zip(cells, vals):
            if i == j:
                row[i] += 2 * v
            else:
                row[i] += v
                row[j] += v
        count += row == list(a)
    return count


def test_exponent_vector_total():
    a = ExponentVector((3, 0, 2))
    assert a.total == 5
    with pytest.raises(ValueError):
        ExponentVector(())
    with pytest.raises(ValueError):
        ExponentVector((1, -1))


def test_four_ones_pairing_matrices():
    mats = enumerate_moment_matrices([1, 1, 1, 1])
    got = {tuple(map(tuple, m.to_array())) for m in mats}
    expected = [
        [[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]],
        [[0, 0, 1, 0], [0, 0, 0, 1], [1, 0, 0, 0], [0, 1, 0, 0]],
        [[0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0], [1, 0, 0, 0]],
    ]
    assert got == {tuple(map(tuple, e)) for e in expected}
    for m in mats:
        assert np.array_equal(m.to_array(), m.to_array().T)
        assert m.satisfies([1, 1, 1, 1])


def test_cubic_pair_two_solutions():
    mats = enumerate_moment_matrices([3, 3])
    assert sorted(m.upper for m in mats) == [(0, 3, 0), (1, 1, 1)]


def test_odd_total_empty():
    assert enumerate_moment_matrices([1, 1, 1]) == ()


@pytest.mark.parametrize("m,expected", [(1, 1), (2, 3), (3, 15), (4, 105), (5, 945)])
def test_pairing_counts(m, expected):
    assert len(enumerate_moment_matrices([1] * (2 * m))) == expected
    assert len(pairings(2 * m)) == expected
    assert expected == math.prod(range(1, 2 * m, 2))


@pytest.mark.parametrize("a", [(1,) * 6, (2, 2), (3, 1, 2), (2, 1, 1), (4, 2)])
def test_enumeration_matches_brute_force(a):
    assert len(enumerate_moment_matrices(a)) == brute_force_count(a)


def test_canonical_order():
    mats = enumerate_moment_matrices([2, 2, 2])
    flat = [m.upper for m in mats]
    assert flat == sorted(flat)


def test_pair_coefficients():
    assert math.exp(pair_moment_coefficient(3, 3, (0, 3, 0))) == pytest.approx(6, rel=1e-14)
    assert math.exp(pair_moment_coefficient(3, 3, (1, 1, 1))) == pytest.approx(9, rel=1e-14)
    assert math.exp(pair_moment_coefficient(1, 1, (0, 1, 0))) == pytest.approx(1, rel=1e-14)
    with pytest.raises(ValueError):
        pair_moment_coefficient(3, 3, (1, 0, 1))


def test_large_order_no_overflow():
    # 200! overflows a double; log-space arithmetic must not
    val = pair_moment_coefficient(200, 200, (0, 200, 0))
    assert np.isfinite(val)
    assert val == pytest.approx(math.lgamma(201), rel=1e-12)


def test_cubic_pair_identity():
    rng = np.random.default_rng(0)
    for _ in range(50):
        P = random_cov(rng, 2)
        expect = 6 * P[0, 1] ** 3 + 9 * P[0, 0] * P[0, 1] * P[1, 1]
        assert product_moment([3, 3], P) == pytest.approx(expect, rel=1e-12)


def test_scalar_moments():
    assert product_moment([2], [[1.7]]) == pytest.approx(1.7)
    assert product_moment([4], [[2.0]]) == pytest.approx(12.0)
    assert product_moment([6], [[1.0]]) == pytest.approx(15.0)


def test_fourth_moment_monte_carlo():
    v = 1.3
    x = np.random.default_rng(1).standard_normal(1_000_000) * np.sqrt(v)
    assert product_moment([4], [[v]]) == pytest.approx(np.mean(x**4), rel=0.02)


def test_unit_four_pairings():
    rng = np.random.default_rng(2)
    P = random_cov(rng, 4)
    expect = P[0, 1] * P[2, 3] + P[0, 2] * P[1, 3] + P[0, 3] * P[1, 2]
    assert product_moment_unit(4, P) == pytest.approx(expect, rel=1e-14)
    assert product_moment_unit(2, P[:2, :2]) == P[0, 1]
    assert product_moment_unit(3, P[:3, :3]) == 0.0


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        product_moment([2, 2], np.eye(3))
    with pytest.raises(ValueError):
        product_moment_unit(3, np.eye(2))


def test_monte_carlo_oracle_small():
    rng = np.random.default_rng(3)
    n = 200_000
    for _ in range(5):
        c = int(rng.integers(1, 5))
        a = rng.integers(0, 4, size=c)
        P = random_cov(rng, c)
        X = rng.multivariate_normal(np.zeros(c), P, size=n)
        s = np.prod(X**a, axis=1)
        se = s.std() / np.sqrt(n)
        assert abs(product_moment(a, P) - s.mean()) <= 3 * se + 1e-12


small_a = st.lists(st.integers(0, 3), min_size=1, max_size=4)


@st.composite
def cov_tables(draw, c):
    seed = draw(st.integers(0, 2**32 - 1))
    return random_cov(np.random.default_rng(seed), c)


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_parity_exact_zero(data):
    a = data.draw(small_a)
    P = data.draw(cov_tables(len(a)))
    if sum(a) % 2:
        assert product_moment(a, P) == 0.0


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_permutation_symmetry(data):
    a = data.draw(small_a)
    c = len(a)
    P = data.draw(cov_tables(c))
    perm = data.draw(st.permutations(range(c)))
    perm = np.array(perm)
    base = product_moment(a, P)
    moved = product_moment(np.array(a)[perm], P[np.ix_(perm, perm)])
    assert moved == pytest.approx(base, rel=1e-12, abs=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.data())
def test_unit_equals_all_ones(c, data):
    P = data.draw(cov_tables(c))
    assert product_moment_unit(c, P) == pytest.approx(product_moment([1] * c, P), rel=1e-13)


@settings(max_examples=60, deadline=None)
@given(small_a)
def test_every_matrix_satisfies_condition(a):
    for m in enumerate_moment_matrices(a):
        assert isinstance(m, MomentMatrix)
        assert m.satisfies(a)
        assert min(m.upper) >= 0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 2), min_size=1, max_size=3))
def test_count_matches_brute_force(a):
    assert len(enumerate_moment_matrices(a)) == brute_force_count(a)
