"""Special functions: frozen high-precision values, properties, sampling."""

import math

import numpy as np
import pytest
import scipy.special
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from covert_irs.specfun import (
    NoiseUncertaintyModel,
    exp_ei_diff,
    expint_ei,
    lambert_w0,
    lambert_wm1,
    logu_cdf,
    logu_sample,
)

INV_E = 1.0 / math.e

# mpmath at 30 significant digits, rounded to float64
LAMBERT_FROZEN = [
    (lambert_w0, 1.0, 0.56714329040978387),
    (lambert_w0, math.e, 1.0),
    (lambert_w0, -0.25, -0.3574029561813889),
    (lambert_wm1, -0.1, -3.5771520639572971),
    (lambert_wm1, -0.2, -2.5426413577735263),
]
EI_FROZEN = [
    (1e-6, -13.238293893062491),
    (0.5, 0.45421990486317358),
    (1.0, 1.8951178163559368),
    (10.0, 2492.2289762418778),
    (50.0, 1.0585636897131691e20),
    (700.0, 1.4509787360525609e301),
]


@pytest.mark.parametrize("fn,z,expected", LAMBERT_FROZEN)
def test_lambert_frozen_values(fn, z, expected):
    assert fn(z) == pytest.approx(expected, rel=5e-15)


def test_lambert_branch_point():
    assert lambert_w0(-INV_E) == pytest.approx(-1.0, abs=1e-7)
    assert lambert_wm1(-INV_E) == pytest.approx(-1.0, abs=1e-7)


@given(st.floats(min_value=-INV_E + 1e-12, max_value=1e12))
@settings(max_examples=300, deadline=None)
def test_lambert_w0_residual_and_range(z):
    w = lambert_w0(z)
    assert w >= -1.0 - 1e-12
    assert abs(w * math.exp(w) - z) <= 1e-12 * max(1.0, abs(z))


@given(st.floats(min_value=-INV_E + 1e-12, max_value=-1e-300))
@settings(max_examples=300, deadline=None)
def test_lambert_wm1_residual_and_range(z):
    w = lambert_wm1(z)
    assert w <= -1.0 + 1e-12
    assert abs(w * math.exp(w) - z) <= 1e-12 * max(1.0, abs(z))


@given(st.floats(min_value=-0.25, max_value=100.0))
@settings(max_examples=200, deadline=None)
def test_lambert_w0_derivative_identity(z):
    # W'(z) = W / (z (1 + W)); checked against a central difference
    h = 1e-6 * max(abs(z), 1.0)
    w = lambert_w0(z)
    numeric = (lambert_w0(z + h) - lambert_w0(z - h)) / (2.0 * h)
    if z == 0.0:
        analytic = 1.0  # limit W'(0)
    else:
        analytic = w / (z * (1.0 + w))
    assert numeric == pytest.approx(analytic, rel=2e-4, abs=1e-6)


def test_lambert_domain_errors():
    with pytest.raises(ValueError):
        lambert_w0(-0.5)
    with pytest.raises(ValueError):
        lambert_wm1(-0.5)
    with pytest.raises(ValueError):
        lambert_wm1(0.0)
    with pytest.raises(ValueError):
        lambert_wm1(0.1)
    with pytest.raises(ValueError):
        lambert_w0(math.inf)


def test_lambert_agrees_with_scipy():
    for z in np.geomspace(1e-8, 1e8, 40):
        assert lambert_w0(z) == pytest.approx(
            float(scipy.special.lambertw(z).real), rel=1e-12
        )
    for z in -np.geomspace(1e-8, INV_E - 1e-8, 40):
        assert lambert_wm1(z) == pytest.approx(
            float(scipy.special.lambertw(z, -1).real), rel=1e-12
        )


@pytest.mark.parametrize("x,expected", EI_FROZEN)
def test_ei_frozen_values(x, expected):
    assert expint_ei(x) == pytest.approx(expected, rel=1e-12)


def test_ei_against_scipy_grid():
    xs = np.geomspace(1e-12, 700.0, 500)
    ours = expint_ei(xs)
    ref = scipy.special.expi(xs)
    assert np.all(np.abs(ours - ref) <= 1e-10 * np.abs(ref))


@given(st.floats(min_value=1e-10, max_value=600.0))
@settings(max_examples=200, deadline=None)
def test_ei_strictly_increasing(x):
    assert expint_ei(x * (1.0 + 1e-6)) > expint_ei(x) or x < 0.37


def test_ei_vectorized_matches_scalar():
    xs = np.array([1e-9, 0.1, 1.0, 40.0, 400.0])
    vec = expint_ei(xs)
    for i, x in enumerate(xs):
        assert vec[i] == expint_ei(float(x))


def test_ei_domain_and_overflow():
    with pytest.raises(ValueError):
        expint_ei(0.0)
    with pytest.raises(ValueError):
        expint_ei(-1.0)
    with pytest.raises(OverflowError):
        expint_ei(720.0)


def test_exp_ei_diff_matches_naive_when_safe():
    rng = np.random.default_rng(7)
    for _ in range(50):
        x = rng.uniform(1.0, 400.0)
        y_hi = x * rng.uniform(0.2, 1.0)
        y_lo = y_hi * rng.uniform(0.05, 1.0)
        naive = math.exp(-x) * (expint_ei(y_hi) - expint_ei(y_lo))
        stable = float(exp_ei_diff(y_lo, y_hi, x)[0])
        assert stable == pytest.approx(naive, rel=1e-9, abs=1e-300)


def test_exp_ei_diff_survives_overflowing_ei():
    # both Ei values overflow float64 but the weighted difference cannot
    val = float(exp_ei_diff(800.0, 900.0, 1000.0)[0])
    assert math.isfinite(val) and val >= 0.0


def test_logu_cdf_piecewise():
    model = NoiseUncertaintyModel(sigma2_n=1e-9, rho=4.0)
    a, b = model.support_low, model.support_high
    assert logu_cdf(model, a * 0.5) == 0.0
    assert logu_cdf(model, a) == pytest.approx(0.0, abs=1e-12)
    assert logu_cdf(model, model.sigma2_n) == pytest.approx(0.5, rel=1e-12)
    assert logu_cdf(model, b) == pytest.approx(1.0, rel=1e-12)
    assert logu_cdf(model, b * 2.0) == 1.0
    x = 3e-9
    expected = math.log(x * model.rho / model.sigma2_n) / (2.0 * math.log(model.rho))
    assert logu_cdf(model, x) == pytest.approx(expected, rel=1e-12)


@given(
    st.floats(min_value=1e-12, max_value=1e-3),
    st.floats(min_value=1.0 + 1e-6, max_value=100.0),
    st.floats(min_value=0.0, max_value=1.0),
    st.floats(min_value=0.0, max_value=1.0),
)
@settings(max_examples=200, deadline=None)
def test_logu_cdf_monotone(sigma2_n, rho, t1, t2):
    model = NoiseUncertaintyModel(sigma2_n, rho)
    span = model.support_high * 1.5
    x1, x2 = sorted((t1 * span, t2 * span))
    assert logu_cdf(model, x1) <= logu_cdf(model, x2) + 1e-15


def test_logu_sample_matches_cdf():
    model = NoiseUncertaintyModel(sigma2_n=2e-9, rho=5.0)
    rng = np.random.default_rng(1234)
    draws = logu_sample(model, rng, size=20000)
    assert np.all(draws >= model.support_low) and np.all(draws <= model.support_high)
    stat, pvalue = scipy.stats.kstest(draws, lambda x: logu_cdf(model, x))
    assert pvalue > 1e-3


def test_rho_one_degenerates_to_point_mass():
    model = NoiseUncertaintyModel(sigma2_n=1e-9, rho=1.0)
    rng = np.random.default_rng(0)
    assert float(logu_sample(model, rng)) == model.sigma2_n
    assert logu_cdf(model, model.sigma2_n * 0.999) == 0.0
    assert logu_cdf(model, model.sigma2_n) == 1.0


def test_model_validation():
    with pytest.raises(ValueError):
        NoiseUncertaintyModel(sigma2_n=0.0, rho=2.0)
    with pytest.raises(ValueError):
        NoiseUncertaintyModel(sigma2_n=1e-9, rho=0.5)
    with pytest.raises(ValueError):
        NoiseUncertaintyModel(sigma2_n=math.nan, rho=2.0)
