import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from cograte.numerics import (
    QuadratureError,
    QuadratureSpec,
    integrate,
    q_function,
    q_inverse,
    scaled_gamma0,
    upper_incomplete_gamma0,
)


def test_q_function_median_and_tail():
    assert q_function(0.0) == 0.5
    assert q_function(40.0) <= 1e-300


def test_q_function_against_gaussian_quadrature():
    # Oracle: integrate the standard normal density directly.
    density = lambda z: math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    ref = integrate(density, 1.0)
    assert ref == pytest.approx(0.15865525393145707, rel=1e-10)
    assert q_function(1.0) == pytest.approx(ref, rel=1e-10)


def test_q_function_vectorised():
    y = np.array([-1.0, 0.0, 1.0])
    np.testing.assert_allclose(q_function(y), stats.norm.sf(y), rtol=1e-14)


@given(st.floats(-37.0, 37.0))
def test_q_function_symmetry(y):
    assert q_function(-y) + q_function(y) == pytest.approx(1.0, abs=1e-12)


@given(st.floats(-5.0, 30.0), st.floats(0.01, 5.0))
def test_q_function_decreasing(y, dy):
    assert q_function(y + dy) < q_function(y)


def test_q_inverse_values():
    assert q_inverse(0.5) == 0.0
    assert q_inverse(0.1) == pytest.approx(1.2815515655446004, rel=1e-12)
    assert q_inverse(q_function(2.3)) == pytest.approx(2.3, abs=1e-10)


def test_q_inverse_by_bisection():
    # Independent oracle: plain bisection on q_function.
    lo, hi = 0.0, 10.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if q_function(mid) > 0.1:
            lo = mid
        else:
            hi = mid
    assert q_inverse(0.1) == pytest.approx(lo, abs=1e-12)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
def test_q_inverse_domain(p):
    with pytest.raises(ValueError):
        q_inverse(p)


@given(st.floats(1e-10, 1 - 1e-10))
def test_q_inverse_round_trip(p):
    y = q_inverse(p)
    assert q_function(y) == pytest.approx(p, rel=1e-9)


@given(st.floats(1e-300, 0.5))
def test_q_inverse_relative_accuracy(p):
    assert q_function(q_inverse(p)) == pytest.approx(p, rel=1e-12)


def test_gamma0_against_quadrature():
    for x, expected in [(1.0, 0.21938393439552062), (10.0, 4.156968929685324e-06)]:
        ref = integrate(lambda q: math.exp(-q) / q, x)
        assert ref == pytest.approx(expected, rel=1e-9)
        assert upper_incomplete_gamma0(x) == pytest.approx(ref, rel=1e-9)
    assert upper_incomplete_gamma0(0.5) > upper_incomplete_gamma0(1.0)


@pytest.mark.parametrize("x", [0.0, -1.0])
def test_gamma0_domain(x):
    with pytest.raises(ValueError):
        upper_incomplete_gamma0(x)


def test_scaled_gamma0_decreasing_and_continuous():
    x = np.logspace(-3, 4, 400)
    s = scaled_gamma0(x)
    assert np.all(np.diff(s) < 0)
    # The asymptotic branch joins the direct one smoothly.
    assert scaled_gamma0(500.0 + 1e-9) == pytest.approx(scaled_gamma0(500.0 - 1e-9), rel=1e-12)
    assert scaled_gamma0(2000.0) == pytest.approx(1 / 2000.0 * (1 - 1 / 2000.0 + 2 / 2000.0**2), rel=1e-9)


def test_integrate_known():
    assert integrate(lambda z: math.exp(-z), 0.0) == pytest.approx(1.0, abs=1e-10)
    assert integrate(lambda z: 0.0, 0.0, 1.0) == 0.0
    assert integrate(lambda z: math.exp(-z) / (1 + z), 0.0) == pytest.approx(
        math.e * upper_incomplete_gamma0(1.0), rel=1e-10
    )
    assert integrate(lambda z: z * z, 0.0, 3.0) == pytest.approx(9.0, rel=1e-12)


def test_integrate_reports_non_convergence():
    spec = QuadratureSpec(rel_tol=1e-12, abs_tol=1e-300, max_subdivisions=3)
    with pytest.raises(QuadratureError):
        integrate(lambda z: math.sin(1.0 / z) if z > 0 else 0.0, 0.0, 1.0, spec)


@pytest.mark.parametrize("kwargs", [{"rel_tol": 0.0}, {"abs_tol": -1.0}, {"max_subdivisions": 0}])
def test_quadrature_spec_validation(kwargs):
    with pytest.raises(ValueError):
        QuadratureSpec(**kwargs)
