"""Warden error probabilities, threshold choice, and leakage caps."""

import math

import numpy as np
import pytest
import scipy.integrate
from hypothesis import given, settings
from hypothesis import strategies as st

from covert_irs.detector import (
    DegenerateModelError,
    DetectionOutcome,
    WardenModel,
    covertness_check,
    expected_pmd_apriori,
    expected_total_error,
    max_covert_leakage,
    optimal_threshold,
    pfa,
    pmd_actual,
    threshold_tables,
    threshold_tables_bracketed,
)
from covert_irs.specfun import NoiseUncertaintyModel, logu_cdf

MODEL = NoiseUncertaintyModel(sigma2_n=1e-9, rho=3.0)


def pmd_apriori_quad(model, lam, tau):
    """Independent oracle: marginalize F(tau - s) over s ~ Exp(lam) by
    integrating the noise density against the conditional mis-detection."""
    a, b = model.support_low, model.support_high
    c = 1.0 / (2.0 * math.log(model.rho))

    def integrand(x):
        return c / x * -math.expm1(-(tau - x) / lam)

    hi = min(b, tau)
    if hi <= a:
        return 0.0
    val, err = scipy.integrate.quad(integrand, a, hi, epsabs=1e-14, epsrel=1e-13, limit=300)
    return val


def test_pfa_complements_cdf():
    taus = np.geomspace(MODEL.support_low * 0.5, MODEL.support_high * 2.0, 50)
    assert np.allclose(pfa(MODEL, taus), 1.0 - logu_cdf(MODEL, taus), rtol=0, atol=0)
    assert pfa(MODEL, MODEL.support_low * 0.9) == 1.0
    assert pfa(MODEL, MODEL.support_high * 1.1) == 0.0


def test_pfa_pmd_sum_to_one_without_signal():
    # inside the support the two error modes partition the sample space
    for tau in np.geomspace(MODEL.support_low, MODEL.support_high, 25):
        assert pfa(MODEL, tau) + pmd_actual(MODEL, tau, 0.0) == 1.0


def test_pmd_actual_shifts_by_signal():
    tau = 2e-9
    s = 0.5e-9
    assert pmd_actual(MODEL, tau, s) == pytest.approx(float(logu_cdf(MODEL, tau - s)))
    assert pmd_actual(MODEL, tau, tau) == 0.0
    assert pmd_actual(MODEL, tau, 5.0 * tau) == 0.0
    with pytest.raises(ValueError):
        pmd_actual(MODEL, tau, -1e-12)


@given(
    st.floats(min_value=1.5, max_value=50.0),
    st.floats(min_value=0.1, max_value=10.0),
    st.floats(min_value=0.1, max_value=10.0),
)
@settings(max_examples=150, deadline=None)
def test_expected_pmd_is_probability_and_monotone_in_tau(rho, lam_rel, tau_rel):
    model = NoiseUncertaintyModel(1e-9, rho)
    lam = lam_rel * model.sigma2_n
    tau = tau_rel * model.sigma2_n
    p1 = expected_pmd_apriori(model, lam, tau)
    p2 = expected_pmd_apriori(model, lam, tau * 1.05)
    assert 0.0 <= p1 <= 1.0
    assert p2 >= p1 - 1e-12


def test_expected_pmd_against_quadrature_spots():
    for rho in (1.5, 3.0, 20.0):
        model = NoiseUncertaintyModel(1e-9, rho)
        for lam_rel in (0.05, 1.0, 30.0):
            for tau_rel in (0.4, 1.0, 2.5, 50.0):
                lam = lam_rel * model.sigma2_n
                tau = tau_rel * model.sigma2_n
                ref = pmd_apriori_quad(model, lam, tau)
                assert expected_pmd_apriori(model, lam, tau) == pytest.approx(
                    ref, abs=1e-10
                ), (rho, lam_rel, tau_rel)


def test_expected_pmd_rho_one_closed_form():
    model = NoiseUncertaintyModel(1e-9, 1.0)
    lam = 2e-9
    tau = 3e-9
    assert expected_pmd_apriori(model, lam, tau) == pytest.approx(
        -math.expm1(-(tau - model.sigma2_n) / lam)
    )
    assert expected_pmd_apriori(model, lam, 0.5e-9) == 0.0


def test_expected_pmd_broadcasts():
    lams = np.array([1e-10, 1e-9, 1e-8])
    taus = np.array([5e-10, 2e-9, 7e-9])
    vec = expected_pmd_apriori(MODEL, lams, taus)
    for i in range(3):
        assert vec[i] == expected_pmd_apriori(MODEL, float(lams[i]), float(taus[i]))


def test_optimal_threshold_beats_grid():
    rng = np.random.default_rng(99)
    for _ in range(10):
        model = NoiseUncertaintyModel(1e-9, float(rng.uniform(1.2, 30.0)))
        lam = model.sigma2_n * 10.0 ** rng.uniform(-2.0, 2.0)
        tau = optimal_threshold(model, lam)
        grid = np.geomspace(model.support_low, model.support_high + 20.0 * lam, 4000)
        best = float(np.min(expected_total_error(model, np.full_like(grid, lam), grid)))
        assert expected_total_error(model, lam, tau) <= best + 1e-9


def test_optimal_threshold_errors():
    with pytest.raises(DegenerateModelError):
        optimal_threshold(NoiseUncertaintyModel(1e-9, 1.0), 1e-9)
    with pytest.raises(ValueError):
        optimal_threshold(MODEL, 0.0)
    with pytest.raises(ValueError):
        optimal_threshold(MODEL, -1e-9)


def test_threshold_tables_match_scalar_path():
    lams = np.geomspace(1e-11, 1e-7, 30)
    tau, pf, smax = threshold_tables(MODEL, lams, xi=0.99)
    for i in (0, 7, 15, 29):
        lam = float(lams[i])
        assert tau[i] == pytest.approx(optimal_threshold(MODEL, lam), rel=1e-12)
        assert pf[i] == pytest.approx(pfa(MODEL, float(tau[i])), rel=0, abs=0)
        assert smax[i] == pytest.approx(max_covert_leakage(MODEL, lam, 0.99), rel=1e-9)


def test_threshold_tables_bracketed_agrees():
    lams = np.geomspace(1e-11, 1e-7, 20)
    tau, pf, smax = threshold_tables(MODEL, lams, xi=0.99)
    mids = np.sqrt(lams[:-1] * lams[1:])
    tau2, pf2, smax2 = threshold_tables_bracketed(MODEL, mids, tau[:-1], tau[1:], 0.99)
    tau_direct, pf_direct, smax_direct = threshold_tables(MODEL, mids, 0.99)
    # both land inside the golden-section convergence width; the objective
    # values, not the raw minimizers, are the binding contract
    assert np.allclose(tau2, tau_direct, rtol=1e-6)
    obj2 = expected_total_error(MODEL, mids, tau2)
    obj_direct = expected_total_error(MODEL, mids, tau_direct)
    assert np.all(obj2 <= obj_direct + 1e-12)
    assert np.allclose(smax2, smax_direct, rtol=1e-6, atol=1e-30)


def test_max_covert_leakage_two_sided():
    xi = 0.99
    for lam_rel in (0.5, 2.0, 20.0):
        lam = lam_rel * MODEL.sigma2_n
        s_max = max_covert_leakage(MODEL, lam, xi)
        if math.isinf(s_max):
            continue
        if s_max > 0.0:
            _, feasible = covertness_check(MODEL, lam, s_max, xi)
            assert feasible
            _, feasible_above = covertness_check(MODEL, lam, s_max * (1.0 + 1e-6), xi)
            assert not feasible_above


def test_max_covert_leakage_unbounded_at_tiny_signal():
    # with a vanishing a-priori mean the threshold hugs the support bottom
    # where false alarms alone exceed xi, so any leakage stays covert
    s = max_covert_leakage(MODEL, MODEL.sigma2_n * 1e-6, 0.99)
    assert math.isinf(s)


def test_max_covert_leakage_xi_edges():
    lam = MODEL.sigma2_n
    assert max_covert_leakage(MODEL, lam, 0.0) == math.inf
    s1 = max_covert_leakage(MODEL, lam, 1.0)
    tau = optimal_threshold(MODEL, lam)
    assert s1 == pytest.approx(max(tau - MODEL.support_high, 0.0))


def test_covertness_check_consistency():
    lam = 2.0 * MODEL.sigma2_n
    outcome, feasible = covertness_check(MODEL, lam, 0.0, 0.99)
    assert outcome.error_sum == pytest.approx(outcome.pfa + outcome.pmd)
    assert outcome.error_sum == pytest.approx(1.0)  # no signal: errors partition
    assert feasible
    with pytest.raises(ValueError):
        covertness_check(MODEL, lam, 0.0, 1.5)


def test_warden_dataclasses_validate():
    WardenModel(MODEL, 1e-9)
    with pytest.raises(ValueError):
        WardenModel(MODEL, -1e-9)
    with pytest.raises(ValueError):
        DetectionOutcome(1e-9, 1.2, 0.0, 1.2)
    out = DetectionOutcome(1e-9, 0.5, 0.5, 1.0)
    assert out.error_sum == 1.0
