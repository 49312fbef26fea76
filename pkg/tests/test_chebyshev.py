import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mskrock.chebyshev import (
    DomainError,
    cheb_eval,
    cheb_T,
    cheb_T_prime,
    cheb_T_sequence,
    cheb_U,
    cheb_U_sequence,
)

mp.mp.dps = 40


def _T_oracle(k, x):
    x = mp.mpf(x)
    return float(mp.cosh(k * mp.acosh(x)))


def _U_oracle(k, x):
    x = mp.mpf(x)
    a = mp.acosh(x)
    return float(mp.sinh((k + 1) * a) / mp.sinh(a))


def test_T0_is_one():
    assert cheb_T(0, 7.3) == 1.0


def test_T3_at_half():
    assert cheb_T(3, 0.5) == pytest.approx(-1.0, abs=1e-15)


def test_T10_matches_high_precision_cosh():
    assert cheb_T(10, 1.0005) == pytest.approx(_T_oracle(10, 1.0005), rel=1e-12)


def test_U0_is_one():
    assert cheb_U(0, -2.1) == 1.0


def test_U_at_one_is_k_plus_one():
    assert cheb_U(2, 1.0) == 3.0


def test_U5_matches_high_precision_sinh_ratio():
    assert cheb_U(5, 1.02) == pytest.approx(_U_oracle(5, 1.02), rel=1e-12)


def test_T_prime_small_cases():
    assert cheb_T_prime(1, 5.0) == 1.0
    assert cheb_T_prime(4, 1.0) == 16.0
    assert cheb_T_prime(0, 3.0) == 0.0


def test_T_prime_against_central_difference():
    h = 1e-6
    fd = (cheb_T(6, 1.01 + h) - cheb_T(6, 1.01 - h)) / (2 * h)
    assert cheb_T_prime(6, 1.01) == pytest.approx(fd, rel=1e-7)


@pytest.mark.parametrize("k", [1, 7, 40, 200])
def test_T_prime_against_mpmath_derivative(k):
    x = 1.0 + 0.05 / k**2
    want = float(mp.diff(lambda u: mp.cosh(k * mp.acosh(u)), mp.mpf(x)))
    assert cheb_T_prime(k, x) == pytest.approx(want, rel=1e-10)


def test_doubling_identity_on_grid():
    x = np.linspace(-1.0, 1.1, 1000)
    for r in (1, 2, 5, 9):
        np.testing.assert_allclose(2 * cheb_T(r, x) ** 2, cheb_T(2 * r, x) + 1, rtol=0, atol=1e-12)


def test_pell_identity_on_grid():
    x = np.linspace(-1.0, 1.1, 1000)
    for r in (1, 3, 6):
        lhs = cheb_T(r, x) ** 2 - 1
        rhs = cheb_U(r - 1, x) ** 2 * (x * x - 1)
        np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-10)


def test_trig_consistency_inside_interval():
    theta = np.linspace(0.01, math.pi - 0.01, 301)
    x = np.cos(theta)
    for k in (1, 2, 17, 64):
        np.testing.assert_allclose(cheb_T(k, x), np.cos(k * theta), rtol=0, atol=1e-12)


def test_bounds_inside_interval():
    x = np.linspace(-1, 1, 2001)
    for k in (1, 5, 20):
        assert np.all(np.abs(cheb_T(k, x)) <= 1 + 1e-12)
        assert np.all(np.abs(cheb_U(k - 1, x)) <= k + 1e-12)


@settings(max_examples=60, deadline=None)
@given(k=st.integers(2, 60), x=st.floats(-1.5, 1.5))
def test_recurrence_consistency(k, x):
    t = cheb_T_sequence(k, x)
    u = cheb_U_sequence(k, x)
    assert t[k] == pytest.approx(2 * x * t[k - 1] - t[k - 2], rel=1e-9, abs=1e-9)
    assert u[k] == pytest.approx(2 * x * u[k - 1] - u[k - 2], rel=1e-9, abs=1e-9)
    assert t[k] == pytest.approx(cheb_T(k, x), rel=1e-12, abs=1e-12)
    assert u[k] == pytest.approx(cheb_U(k, x), rel=1e-12, abs=1e-12)


def test_array_and_scalar_agree():
    x = np.array([0.3, 1.0, 1.2])
    vals = cheb_T(5, x)
    assert isinstance(vals, np.ndarray)
    assert [cheb_T(5, float(v)) for v in x] == pytest.approx(list(vals))
    assert isinstance(cheb_T(5, 0.3), float)


def test_cheb_eval_record():
    e = cheb_eval(3, 1.1)
    assert e.value == pytest.approx(cheb_T(3, 1.1))
    assert e.derivative == pytest.approx(3 * cheb_U(2, 1.1))


@pytest.mark.parametrize("x", [math.nan, math.inf, -math.inf])
def test_non_finite_argument_rejected(x):
    with pytest.raises(DomainError):
        cheb_T(3, x)
    with pytest.raises(DomainError):
        cheb_U(3, x)


def test_bad_degree_rejected():
    with pytest.raises(DomainError):
        cheb_T(-1, 0.5)
    with pytest.raises(DomainError):
        cheb_U(2.5, 0.5)
