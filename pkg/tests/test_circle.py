import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from kuramoto_rgg.circle import (DomainError, geodesic_distance, is_antipodal, normalize,
                                 signed_diff)

PI = math.pi
angles = st.floats(-50.0, 50.0, allow_nan=False)


@pytest.mark.parametrize("x, expected", [(2 * PI, 0.0), (-PI / 2, 3 * PI / 2), (5 * PI, PI)])
def test_normalize_examples(x, expected):
    assert normalize(x) == pytest.approx(expected, abs=1e-15)


def test_normalize_rejects_non_finite():
    with pytest.raises(DomainError):
        normalize(np.array([0.0, np.inf]))
    with pytest.raises(DomainError):
        normalize(float("nan"))


@given(angles)
def test_normalize_range_and_idempotent(x):
    y = normalize(x)
    assert 0.0 <= y < 2 * PI
    assert normalize(y) == y


@given(st.floats(-1e-17, 1e-17, allow_nan=False))
def test_normalize_tiny_negatives_stay_below_two_pi(x):
    assert 0.0 <= normalize(x) < 2 * PI


@pytest.mark.parametrize("a, b, expected", [(0, PI / 3, PI / 3), (PI / 6, 11 * PI / 6, PI / 3),
                                            (0, PI, PI)])
def test_geodesic_distance_examples(a, b, expected):
    assert geodesic_distance(a, b) == pytest.approx(expected, abs=1e-14)


@pytest.mark.parametrize("a, b, expected", [(PI / 6, 11 * PI / 6, PI / 3),
                                            (11 * PI / 6, PI / 6, -PI / 3), (0, PI, PI)])
def test_signed_diff_examples(a, b, expected):
    assert signed_diff(a, b) == pytest.approx(expected, abs=1e-14)


def test_is_antipodal_examples():
    assert is_antipodal(0.0, PI, tol=0.0)
    assert not is_antipodal(0.0, PI - 1e-3, tol=1e-6)
    assert is_antipodal(0.0, PI - 1e-9, tol=1e-6)
    with pytest.raises(DomainError):
        is_antipodal(0.0, 1.0, tol=-1.0)


@given(angles, angles)
def test_signed_diff_range_and_distance(a, b):
    d = signed_diff(a, b)
    assert -PI < d <= PI
    assert geodesic_distance(a, b) == abs(d)


@given(angles, angles)
def test_signed_diff_antisymmetric(a, b):
    assume(geodesic_distance(a, b) != PI)
    assert signed_diff(a, b) == -signed_diff(b, a)
    assert geodesic_distance(a, b) == geodesic_distance(b, a)


@given(angles, angles, angles)
def test_signed_diff_rotation_invariant(a, b, c):
    assume(abs(geodesic_distance(a, b) - PI) > 1e-9)
    rotated = signed_diff(normalize(a + c), normalize(b + c))
    assert rotated == pytest.approx(signed_diff(a, b), abs=1e-12)


def test_vectorised_matches_scalar():
    rng = np.random.default_rng(5)
    a, b = rng.uniform(-10, 10, 200), rng.uniform(-10, 10, 200)
    vec = signed_diff(a, b)
    assert all(vec[i] == signed_diff(a[i], b[i]) for i in range(200))
