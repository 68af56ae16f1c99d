"""Self-check suites behind the ``validate`` command.

Each suite recomputes a core quantity through an independent route
(quadrature, dense grids, exhaustive search) and compares against the
library path.  ``fast`` trims grid sizes to stay interactive; ``full``
runs the complete grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import detector, specfun
from .channel import Scenario, effective_amplitude, sample_realization
from .optimizer import SolveOptions, solve_phases_constrained
from .specfun import EULER_GAMMA, NoiseUncertaintyModel

LEVELS = ("fast", "full")


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    worst: float
    bound: float
    detail: str


def _lambert_domain_grids(count: int):
    half = count // 2
    pos = np.geomspace(1e-12, 1e12, half)
    # negative arguments approach the branch point -1/e from above
    off = np.geomspace(1e-12, 1.0, count - half, endpoint=False)
    neg = -(1.0 - off) / math.e
    return pos, neg


def suite_lambert(level: str) -> SuiteResult:
    count = 10_000 if level == "full" else 2_000
    bound = 1e-12
    pos, neg = _lambert_domain_grids(count)
    worst = 0.0
    for z in np.concatenate([pos, neg, [-1.0 / math.e]]):
        w = specfun.lambert_w0(float(z))
        worst = max(worst, abs(w * math.exp(w) - z) / max(1.0, abs(z)))
    scale = np.geomspace(1e-12, 1.0, count, endpoint=False)
    for z in np.concatenate([-scale[::-1] / math.e, [-1.0 / math.e]]):
        w = specfun.lambert_wm1(float(z))
        worst = max(worst, abs(w * math.exp(w) - z) / max(1.0, abs(z)))
    return SuiteResult("lambert-residual", worst <= bound, worst, bound,
                       f"{2 * count + 2} arguments, both branches")


def _ei_quadrature(x: float) -> float:
    # Ei(x) = gamma + ln x + integral of (e^t - 1)/t over [0, x]; the
    # integrand is smooth so adaptive quadrature needs no PV handling
    val, _ = integrate.quad(lambda t: math.expm1(t) / t, 0.0, x,
                            epsabs=0.0, epsrel=1e-13, limit=400)
    return EULER_GAMMA + math.log(x) + val


def suite_ei(level: str) -> SuiteResult:
    if level == "full":
        grid = np.geomspace(1e-12, 690.0, 160)
    else:
        grid = np.geomspace(1e-10, 50.0, 60)
    bound = 1e-10
    worst = 0.0
    for x in grid:
        ref = _ei_quadrature(float(x))
        val = specfun.expint_ei(float(x))
        worst = max(worst, abs(val - ref) / max(1e-300, abs(ref)))
    return SuiteResult("ei-quadrature", worst <= bound, worst, bound,
                       f"{grid.size} points in [{grid[0]:g}, {grid[-1]:g}]")


def _pmd_quadrature(model: NoiseUncertaintyModel, lam: float, tau: float) -> float:
    a, b = model.support_low, model.support_high
    c = 1.0 / (2.0 * math.log(model.rho))

    def integrand(x):
        return c / x * (-math.expm1(-(tau - x) / lam)) if tau > x else 0.0

    pts = [tau] if a < tau < b else None
    val, _ = integrate.quad(integrand, a, b, points=pts, epsabs=1e-12,
                            epsrel=1e-12, limit=400)
    return val


def suite_pmd(level: str) -> SuiteResult:
    n = 20 if level == "full" else 6
    bound = 1e-8
    worst = 0.0
    rhos = np.geomspace(1.1, 10.0, n)
    ratios = np.geomspace(0.01, 100.0, n)
    for rho in rhos:
        model = NoiseUncertaintyModel(1.0, float(rho))
        taus = np.geomspace(0.1 / rho, 10.0 * rho, n)
        for lam in ratios:
            for tau in taus:
                ref = _pmd_quadrature(model, float(lam), float(tau))
                val = detector.expected_pmd_apriori(model, float(lam), float(tau))
                worst = max(worst, abs(val - ref))
    return SuiteResult("pmd-quadrature", worst <= bound, worst, bound,
                       f"{n}x{n}x{n} grid of (rho, mean/sigma2, tau/sigma2)")


def suite_threshold(level: str) -> SuiteResult:
    draws = 200 if level == "full" else 20
    bound = 1e-9
    rng = np.random.default_rng(1905)
    worst = -math.inf
    for _ in range(draws):
        rho = math.exp(rng.uniform(math.log(1.1), math.log(10.0)))
        sigma2 = 10.0 ** rng.uniform(-10.0, 0.0)
        model = NoiseUncertaintyModel(sigma2, rho)
        lam = sigma2 * 10.0 ** rng.uniform(-3.0, 3.0)
        tau = detector.optimal_threshold(model, lam)
        val = detector.expected_total_error(model, lam, tau)
        grid = np.geomspace(model.support_low, model.support_high + 20.0 * lam, 10_000)
        ref = float(np.min(detector.expected_total_error(model, np.full_like(grid, lam), grid)))
        worst = max(worst, val - ref)
    return SuiteResult("threshold-grid", worst <= bound, worst, bound,
                       f"{draws} random (rho, lambda) draws vs 10^4-point grids")


def _oracle_scenario() -> Scenario:
    noise = NoiseUncertaintyModel(1e-9, 2.0)
    return Scenario(pos_alice=(0.0, 0.0), pos_bob=(10.0, 0.0), pos_irs=(5.0, 0.0),
                    pos_willie=(0.0, 15.0), n_units=2, alpha=3.0, sigma2_b=1e-9,
                    noise=noise, xi=0.99, p_max=1e-3)


def suite_bcd_oracle(level: str) -> SuiteResult:
    draws = 100
    scenario = _oracle_scenario()
    gaw2 = scenario.d_aw ** -scenario.alpha
    opts = SolveOptions(restarts=2, phase_grid=64, rng_seed=11)
    angles = np.arange(64) * (2.0 * math.pi / 64.0)
    phase = np.exp(1j * angles)
    worst_gap = 0.0
    ok = 0
    capped = 0
    for r in range(draws):
        rng = np.random.default_rng(500 + r)
        real = sample_realization(scenario, rng)
        p_a = 10.0 ** rng.uniform(-8.5, -5.5)
        s_max = detector.max_covert_leakage(scenario.noise, p_a * gaw2, scenario.xi)
        u = real.cascade("bob")
        v = real.cascade("willie")
        amp_b = real.direct("bob") + np.add.outer(u[0] * phase, u[1] * phase)
        amp_w = real.direct("willie") + np.add.outer(v[0] * phase, v[1] * phase)
        feas = np.abs(amp_w) ** 2 * p_a <= s_max
        cfg, feasible = solve_phases_constrained(real, p_a, s_max, opts)
        if not feas.any():
            ok += feasible is False
            continue
        capped += not feas.all()
        oracle_b2 = float(np.max(np.abs(amp_b)[feas] ** 2))
        got_b2 = abs(effective_amplitude(real, cfg, "bob")) ** 2
        got_w2 = abs(effective_amplitude(real, cfg, "willie")) ** 2
        gap = 1.0 - got_b2 / oracle_b2
        worst_gap = max(worst_gap, gap)
        if feasible and got_w2 * p_a <= s_max and got_b2 >= 0.99 * oracle_b2:
            ok += 1
    return SuiteResult("bcd-oracle", ok >= 99, float(worst_gap), 0.01,
                       f"{ok}/{draws} draws within 1% of the 64^2 exhaustive "
                       f"search ({capped} with an active cap)")


SUITES = (suite_lambert, suite_ei, suite_pmd, suite_threshold, suite_bcd_oracle)


def run_validation(level: str) -> list[SuiteResult]:
    if level not in LEVELS:
        raise ValueError(f"level must be one of {LEVELS}, got {level!r}")
    return [suite(level) for suite in SUITES]
