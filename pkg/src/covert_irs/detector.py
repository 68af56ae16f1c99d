"""Warden detection statistics under bounded noise uncertainty.

The warden compares average received power against a threshold.  With the
transmitter silent the statistic is just the (log-uniformly uncertain) noise
power; with it active, an exponentially distributed signal term of a-priori
mean ``lam`` adds on.  False-alarm and expected mis-detection probabilities
have closed forms in the exponential integral; the optimal threshold is
found numerically, with the Lambert-W closed form kept as a cross-check.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import specfun
from .specfun import NoiseUncertaintyModel, logu_cdf

logger = logging.getLogger(__name__)

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
_SEED_GRID = 512
_GOLDEN_ITERS = 90
_ACCEL_RTOL = 1e-6
_FEAS_SLACK = 1e-12


class DegenerateModelError(ValueError):
    """Raised when an operation needs strictly positive noise uncertainty."""


@dataclass(frozen=True)
class WardenModel:
    """Bundle of the warden's noise model and a-priori signal mean."""

    noise: NoiseUncertaintyModel
    lambda_apriori: float

    def __post_init__(self):
        if not (self.lambda_apriori >= 0.0 and math.isfinite(self.lambda_apriori)):
            raise ValueError(f"lambda_apriori must be >= 0, got {self.lambda_apriori!r}")


@dataclass(frozen=True)
class DetectionOutcome:
    """Error probabilities at one threshold.

    ``error_sum`` is ``pfa + pmd``; covertness holds when it reaches the
    target level xi.
    """

    tau: float
    pfa: float
    pmd: float
    error_sum: float

    def __post_init__(self):
        for name in ("pfa", "pmd"):
            v = getattr(self, name)
            if not -1e-9 <= v <= 1.0 + 1e-9:
                raise ValueError(f"{name} must be a probability, got {v!r}")


def pfa(model: NoiseUncertaintyModel, tau):
    """False-alarm probability ``P[noise power > tau]`` (transmitter silent)."""
    return _as_input_shape(1.0 - np.asarray(logu_cdf(model, tau)), tau)


def pmd_actual(model: NoiseUncertaintyModel, tau, s_w):
    """Mis-detection probability at received signal power ``s_w``.

    The warden misses when noise + s_w stays below tau, i.e. with
    probability ``F(tau - s_w)``.
    """
    t = np.asarray(tau, dtype=np.float64)
    s = np.asarray(s_w, dtype=np.float64)
    if np.any(s < 0.0):
        raise ValueError("s_w must be nonnegative")
    return _as_input_shape(np.asarray(logu_cdf(model, t - s)), tau if t.shape else s_w)


def _as_input_shape(arr, like):
    arr = np.asarray(arr)
    if np.asarray(like).ndim == 0 and arr.size == 1:
        return float(arr.reshape(()))
    return arr


def expected_pmd_apriori(model: NoiseUncertaintyModel, lam, tau):
    """Expected mis-detection over noise uncertainty and the exponential prior.

    Marginalizes ``F(tau - s)`` over s ~ Exp(mean lam) and the noise draw.
    Piecewise in tau against the noise support [a, b]:

    - ``tau <= a``: 0
    - ``a < tau <= b``: ``[ln(tau/a) - e^{-tau/lam}(Ei(tau/lam) - Ei(a/lam))] / (2 ln rho)``
    - ``tau > b``: ``1 - e^{-tau/lam}(Ei(b/lam) - Ei(a/lam)) / (2 ln rho)``

    evaluated through scaled Ei products so large ``x/lam`` ratios cannot
    overflow.  Broadcasts over ``lam`` and ``tau``.
    """
    lam_a = np.asarray(lam, dtype=np.float64)
    tau_a = np.asarray(tau, dtype=np.float64)
    if np.any(lam_a <= 0.0):
        raise ValueError("lam must be positive")
    if np.any(tau_a <= 0.0):
        raise ValueError("tau must be positive")
    scalar = lam_a.ndim == 0 and tau_a.ndim == 0
    lam_b, tau_b = np.broadcast_arrays(np.atleast_1d(lam_a), np.atleast_1d(tau_a))

    if model.rho == 1.0:
        out = np.where(
            tau_b > model.sigma2_n,
            -np.expm1(-np.maximum(tau_b - model.sigma2_n, 0.0) / lam_b),
            0.0,
        )
        return float(out[0]) if scalar else out.reshape(np.broadcast_shapes(lam_a.shape, tau_a.shape))

    a = model.support_low
    b = model.support_high
    two_ln_rho = 2.0 * math.log(model.rho)
    out = np.zeros(lam_b.shape, dtype=np.float64)

    mid = (tau_b > a) & (tau_b <= b)
    if np.any(mid):
        lm, tm = lam_b[mid], tau_b[mid]
        corr = specfun.exp_ei_diff(a / lm, tm / lm, tm / lm)
        out[mid] = (np.log(tm / a) - corr) / two_ln_rho

    high = tau_b > b
    if np.any(high):
        lh, th = lam_b[high], tau_b[high]
        corr = specfun.exp_ei_diff(a / lh, b / lh, th / lh)
        out[high] = 1.0 - corr / two_ln_rho

    np.clip(out, 0.0, 1.0, out=out)
    if scalar:
        return float(out[0])
    return out.reshape(np.broadcast_shapes(lam_a.shape, tau_a.shape))


def expected_total_error(model: NoiseUncertaintyModel, lam, tau):
    """``pfa(tau) + E[pmd](tau)``, the warden's a-priori objective."""
    return pfa(model, tau) + expected_pmd_apriori(model, lam, tau)


def _golden_polish(model: NoiseUncertaintyModel, lams: np.ndarray, lo: np.ndarray, up: np.ndarray) -> np.ndarray:
    """Lockstep golden-section minimization in log-threshold space.

    ``lo``/``up`` are log brackets per lane; a fixed iteration count keeps
    every lane on the same schedule so results do not depend on batching.
    """
    c = up - (up - lo) * _INV_PHI
    d = lo + (up - lo) * _INV_PHI
    fc = expected_total_error(model, lams, np.exp(c))
    fd = expected_total_error(model, lams, np.exp(d))
    for _ in range(_GOLDEN_ITERS):
        take_left = fc < fd
        up = np.where(take_left, d, up)
        lo = np.where(take_left, lo, c)
        d = np.where(take_left, c, d)
        fd = np.where(take_left, fc, fd)
        c = np.where(take_left, up - (up - lo) * _INV_PHI, d)
        new_x = np.where(take_left, c, lo + (up - lo) * _INV_PHI)
        fnew = expected_total_error(model, lams, np.exp(new_x))
        fc = np.where(take_left, fnew, fd)
        d = np.where(take_left, d, new_x)
        fd = np.where(take_left, fd, fnew)
    return np.exp(0.5 * (lo + up))


def _pick_best(model: NoiseUncertaintyModel, lams: np.ndarray, cand: np.ndarray) -> np.ndarray:
    """Per-lane argmin of the total-error objective over candidate columns."""
    cobj = expected_total_error(model, lams[:, None], cand)
    best = np.argmin(cobj, axis=1)
    return cand[np.arange(lams.shape[0]), best]


def _threshold_reference(model: NoiseUncertaintyModel, lams: np.ndarray) -> np.ndarray:
    """Vector reference minimizer of the total-error objective.

    512-point log seed grid on [a, b + 20 lam] per lane, golden-section
    polish in log space, and a final argmin over {polished point, grid
    incumbent, a, b} to cover the kinks at the support edges.
    """
    a = model.support_low
    b = model.support_high
    lams = np.asarray(lams, dtype=np.float64)
    hi = b + 20.0 * lams

    ratio = np.log(hi / a)
    steps = np.linspace(0.0, 1.0, _SEED_GRID)
    tgrid = a * np.exp(ratio[:, None] * steps[None, :])
    obj = expected_total_error(model, lams[:, None], tgrid)
    k = np.argmin(obj, axis=1)
    rows = np.arange(lams.shape[0])

    lo = np.log(tgrid[rows, np.maximum(k - 1, 0)])
    up = np.log(tgrid[rows, np.minimum(k + 1, _SEED_GRID - 1)])
    polished = _golden_polish(model, lams, lo, up)

    cand = np.stack(
        [
            polished,
            tgrid[rows, k],
            np.full_like(lams, a),
            np.full_like(lams, b),
        ],
        axis=1,
    )
    return _pick_best(model, lams, cand)


def _threshold_bracketed(
    model: NoiseUncertaintyModel,
    lams: np.ndarray,
    tau_lo: np.ndarray,
    tau_hi: np.ndarray,
) -> np.ndarray:
    """Threshold minimizer when a bracket is already known.

    Used by the power-refinement stage: thresholds at neighboring power
    points bracket the new one (the minimizer moves continuously with the
    a-priori mean), so the seed grid can be skipped.  Brackets are widened
    5% each way and the support edges stay in the candidate set, so a
    minimizer pinned at a kink is still found.
    """
    lams = np.asarray(lams, dtype=np.float64)
    a = model.support_low
    b = model.support_high
    lo_t = np.minimum(tau_lo, tau_hi) * 0.95
    hi_t = np.maximum(tau_lo, tau_hi) * 1.05
    polished = _golden_polish(model, lams, np.log(lo_t), np.log(hi_t))
    cand = np.stack(
        [
            polished,
            np.asarray(tau_lo, dtype=np.float64),
            np.asarray(tau_hi, dtype=np.float64),
            np.full_like(lams, a),
            np.full_like(lams, b),
        ],
        axis=1,
    )
    return _pick_best(model, lams, cand)


def _accelerated_threshold(model: NoiseUncertaintyModel, lam: float) -> float | None:
    """Closed-form threshold candidate via Lambert W; None when out of reach."""
    a = model.support_low
    b = model.support_high
    if b / lam > 700.0:
        return None
    ei_span = specfun.expint_ei(b / lam) - specfun.expint_ei(a / lam)
    if not ei_span > 0.0 or not math.isfinite(ei_span):
        return None
    z = -1.0 / ei_span
    if z < -specfun._INV_E or z >= 0.0:
        return None
    cands = []
    for branch in (specfun.lambert_w0, specfun.lambert_wm1):
        try:
            w = branch(z)
        except (ValueError, ArithmeticError):
            continue
        t = -w * lam
        if t > 0.0 and math.isfinite(t):
            cands.append(t)
    if not cands:
        return None
    vals = [expected_total_error(model, lam, t) for t in cands]
    return cands[int(np.argmin(vals))]


def optimal_threshold(model: NoiseUncertaintyModel, lam: float) -> float:
    """Warden threshold minimizing a-priori ``pfa + E[pmd]``.

    Always returns the numeric reference minimizer.  The Lambert-W
    closed-form candidate is evaluated alongside when representable and a
    disagreement beyond 1e-6 relative is logged, never returned; keeping a
    single source of truth means every caller sees identical thresholds.

    Raises
    ------
    DegenerateModelError
        If ``rho == 1`` (the objective degenerates to a step).
    ValueError
        If ``lam <= 0``.
    """
    if model.rho == 1.0:
        raise DegenerateModelError("optimal threshold undefined at rho = 1 (no uncertainty spread)")
    if not (lam > 0.0 and math.isfinite(lam)):
        raise ValueError(f"lam must be positive and finite, got {lam!r}")
    ref = float(_threshold_reference(model, np.array([lam]))[0])
    acc = _accelerated_threshold(model, lam)
    if acc is not None and abs(acc - ref) > _ACCEL_RTOL * ref:
        logger.info(
            "closed-form threshold %.9e disagrees with reference %.9e at lam=%.3e rho=%.3f; using reference",
            acc, ref, lam, model.rho,
        )
    return ref


def covertness_check(
    model: NoiseUncertaintyModel,
    lambda_apriori: float,
    s_w_actual: float,
    xi: float,
) -> tuple[DetectionOutcome, bool]:
    """Evaluate the warden at its optimal threshold against an actual leakage.

    Returns the outcome at ``tau*`` plus a flag for ``pfa + pmd >= xi``
    (with 1e-12 slack against rounding).
    """
    if not 0.0 <= xi <= 1.0:
        raise ValueError(f"xi must lie in [0, 1], got {xi!r}")
    tau = optimal_threshold(model, lambda_apriori)
    p_fa = pfa(model, tau)
    p_md = pmd_actual(model, tau, s_w_actual)
    total = p_fa + p_md
    return DetectionOutcome(tau, p_fa, p_md, total), bool(total >= xi - _FEAS_SLACK)


def _leakage_from_threshold(model: NoiseUncertaintyModel, tau, pfa_tau, xi: float):
    """Largest actual leakage keeping ``pfa + pmd >= xi`` at threshold tau.

    Solves ``F(tau - s) >= xi - pfa`` exactly via the log-uniform quantile;
    infinite when the false-alarm rate alone already meets xi.
    """
    tau = np.asarray(tau, dtype=np.float64)
    pfa_tau = np.asarray(pfa_tau, dtype=np.float64)
    a = model.support_low
    q = xi - pfa_tau
    with np.errstate(over="ignore"):
        s = tau - a * model.rho ** (2.0 * q)
    return np.where(q <= 0.0, np.inf, np.maximum(s, 0.0))


def max_covert_leakage(model: NoiseUncertaintyModel, lambda_apriori: float, xi: float) -> float:
    """Maximum received signal power at the warden compatible with level xi.

    Evaluated at the warden's optimal threshold for the given a-priori mean;
    ``inf`` when the covertness constraint never binds.
    """
    if not 0.0 <= xi <= 1.0:
        raise ValueError(f"xi must lie in [0, 1], got {xi!r}")
    tau = optimal_threshold(model, lambda_apriori)
    return float(_leakage_from_threshold(model, tau, pfa(model, tau), xi))


def threshold_tables(model: NoiseUncertaintyModel, lams: np.ndarray, xi: float):
    """Vectorized ``(tau*, pfa(tau*), s_max)`` for many a-priori means.

    Shares one reference-threshold pass across all lanes; this is the
    engine-facing batch form of optimal_threshold + max_covert_leakage.
    """
    if model.rho == 1.0:
        raise DegenerateModelError("optimal threshold undefined at rho = 1 (no uncertainty spread)")
    lams = np.asarray(lams, dtype=np.float64)
    if np.any(lams <= 0.0):
        raise ValueError("lams must be positive")
    tau = _threshold_reference(model, lams)
    p = pfa(model, tau)
    smax = _leakage_from_threshold(model, tau, p, xi)
    return tau, np.asarray(p, dtype=np.float64), smax


def threshold_tables_bracketed(
    model: NoiseUncertaintyModel,
    lams: np.ndarray,
    tau_lo: np.ndarray,
    tau_hi: np.ndarray,
    xi: float,
):
    """Like threshold_tables but seeded from known neighboring thresholds."""
    if model.rho == 1.0:
        raise DegenerateModelError("optimal threshold undefined at rho = 1 (no uncertainty spread)")
    lams = np.asarray(lams, dtype=np.float64)
    if np.any(lams <= 0.0):
        raise ValueError("lams must be positive")
    tau = _threshold_bracketed(model, lams, tau_lo, tau_hi)
    p = pfa(model, tau)
    smax = _leakage_from_threshold(model, tau, p, xi)
    return tau, np.asarray(p, dtype=np.float64), smax
