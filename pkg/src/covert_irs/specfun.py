"""Special functions and the bounded noise-uncertainty model.

Real-branch Lambert W, the exponential integral Ei, and the log-uniform
distribution used for the warden's noise power live here.  Everything is
plain float64; the Ei helpers expose internally-scaled variants so callers
can form products like exp(-x) * (Ei(y2) - Ei(y1)) without overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EULER_GAMMA = 0.5772156649015328606
# largest x with Ei(x) finite in float64; exp(x - log x) overflows just above
_EI_XMAX = 716.35
# series/asymptotic split for Ei
_EI_SPLIT = 40.0
_INV_E = 0.36787944117144233


# ---------------------------------------------------------------------------
# Lambert W, real branches
# ---------------------------------------------------------------------------

def _branch_series(p: float) -> float:
    # Series about the branch point z = -1/e with p = +-sqrt(2(ez+1)).
    # Coefficients from the standard expansion; accurate to ~1e-12 for |p|<=0.01.
    return -1.0 + p * (1.0 + p * (-1.0 / 3.0 + p * (11.0 / 72.0 + p * (-43.0 / 540.0 + p * (769.0 / 17280.0)))))


def _halley(w: float, z: float, iters: int = 80) -> float:
    for _ in range(iters):
        ew = math.exp(w)
        f = w * ew - z
        wp1 = w + 1.0
        denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
        if denom == 0.0:
            break
        dw = f / denom
        w -= dw
        if abs(dw) <= 1e-16 * (2.0 + abs(w)):
            break
    return w


def _bisect_we_w(z: float, lo: float, hi: float) -> float:
    # Safety net: w * e^w is monotone on each bracket we ever pass in.
    flo = lo * math.exp(lo) - z
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = mid * math.exp(mid) - z
        if fm == 0.0:
            return mid
        if (fm < 0.0) == (flo < 0.0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo <= 1e-16 * (1.0 + abs(mid)):
            break
    return 0.5 * (lo + hi)


def _residual_ok(w: float, z: float) -> bool:
    return abs(w * math.exp(w) - z) <= 1e-12 * max(1.0, abs(z))


def lambert_w0(z: float) -> float:
    """Principal real branch of Lambert W.

    Solves ``w * exp(w) = z`` for ``w >= -1``.

    Parameters
    ----------
    z : float
        Argument, ``z >= -1/e``.

    Returns
    -------
    float
        ``W_0(z)``, with residual ``|w e^w - z| <= 1e-12 * max(1, |z|)``.

    Raises
    ------
    ValueError
        If ``z < -1/e`` (beyond the branch point).
    """
    z = float(z)
    if not math.isfinite(z):
        raise ValueError(f"lambert_w0 needs a finite argument, got {z!r}")
    if z < -_INV_E - 4e-16:
        raise ValueError(f"lambert_w0 is real only for z >= -1/e, got {z!r}")
    if z == 0.0:
        return 0.0
    zc = max(z, -_INV_E)
    if zc < -0.25:
        p = math.sqrt(max(2.0 * (math.e * zc + 1.0), 0.0))
        w = _branch_series(p)
        if p <= 0.01:
            return w
    elif zc < 3.0:
        w = zc / (1.0 + zc)
    else:
        lz = math.log(zc)
        llz = math.log(lz)
        w = lz - llz + llz / lz
    w = _halley(w, zc)
    if not _residual_ok(w, zc):
        if zc < 0.0:
            w = _bisect_we_w(zc, -1.0, 0.0)
        else:
            w = _bisect_we_w(zc, 0.0, math.log(zc + 1.0) + 1.0)
    if not _residual_ok(w, zc):
        raise ArithmeticError(f"lambert_w0 failed to converge at z={z!r}")
    return w


def lambert_wm1(z: float) -> float:
    """Lower real branch of Lambert W.

    Solves ``w * exp(w) = z`` for ``w <= -1``; defined on ``[-1/e, 0)``.

    Parameters
    ----------
    z : float
        Argument in ``[-1/e, 0)``.

    Returns
    -------
    float
        ``W_{-1}(z)``, with residual ``|w e^w - z| <= 1e-12 * max(1, |z|)``.

    Raises
    ------
    ValueError
        If ``z`` lies outside ``[-1/e, 0)``.
    """
    z = float(z)
    if not (-_INV_E - 4e-16 <= z < 0.0):
        raise ValueError(f"lambert_wm1 is real only for -1/e <= z < 0, got {z!r}")
    zc = max(z, -_INV_E)
    p = math.sqrt(max(2.0 * (math.e * zc + 1.0), 0.0))
    if p <= 0.01:
        return _branch_series(-p)
    if zc < -0.25:
        w = _branch_series(-p)
    else:
        c = math.log(-zc)
        lc = math.log(-c)
        w = c - lc + lc / c
    w = _halley(w, zc)
    if not (_residual_ok(w, zc) and w <= -1.0):
        c = math.log(-zc)
        w = _bisect_we_w(zc, c - math.log(-c) - 2.0 if c < -1.0 else -3.0, -1.0)
    if not _residual_ok(w, zc):
        raise ArithmeticError(f"lambert_wm1 failed to converge at z={z!r}")
    return w


# ---------------------------------------------------------------------------
# Exponential integral Ei
# ---------------------------------------------------------------------------

def _ei_series(x: np.ndarray) -> np.ndarray:
    # gamma + ln x + sum x^k / (k k!), all terms positive: no cancellation.
    out = EULER_GAMMA + np.log(x)
    term = np.ones_like(x)
    acc = np.zeros_like(x)
    for k in range(1, 180):
        term = term * x / k
        contrib = term / k
        acc += contrib
        if np.all(contrib <= 1e-17 * (1.0 + np.abs(acc))):
            break
    return out + acc


def _ei_scaled_asymp(y: np.ndarray) -> np.ndarray:
    # e^(-y) Ei(y) ~ (1/y) sum_k k!/y^k, valid for y > ~40 where the first
    # neglected term is below 1e-16 relative.
    s = np.ones_like(y)
    term = np.ones_like(y)
    for k in range(1, 41):
        term = term * k / y
        s += term
    return s / y


def expint_ei(x):
    """Exponential integral ``Ei(x)`` for positive real arguments.

    Power series below 40, asymptotic expansion of ``e^{-x} Ei(x)`` above,
    recombined as ``exp(x - log x) * s`` so arguments up to ~716 stay finite.

    Parameters
    ----------
    x : float or ndarray
        Positive argument(s).

    Returns
    -------
    float or ndarray
        ``Ei(x)`` with relative accuracy better than 1e-10 on [1e-12, 700].

    Raises
    ------
    ValueError
        If any argument is not strictly positive.
    OverflowError
        If ``Ei(x)`` exceeds the float64 range (x above ~716.35).
    """
    arr = np.asarray(x, dtype=np.float64)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0.0):
        raise ValueError("expint_ei is defined here for finite x > 0")
    if np.any(arr > _EI_XMAX):
        raise OverflowError(f"Ei overflows float64 for x > {_EI_XMAX}")
    out = np.empty_like(arr)
    lo = arr <= _EI_SPLIT
    if np.any(lo):
        out[lo] = _ei_series(arr[lo])
    if np.any(~lo):
        xh = arr[~lo]
        out[~lo] = np.exp(xh - np.log(xh)) * (xh * _ei_scaled_asymp(xh))
    if np.any(np.isinf(out)):
        raise OverflowError("Ei overflows float64 at the largest argument")
    return float(out[0]) if scalar else out


def exp_ei_diff(y_lo, y_hi, x):
    """Stable ``exp(-x) * (Ei(y_hi) - Ei(y_lo))`` for ``0 < y_lo <= y_hi <= x``.

    The constraint on the exponents means every internal factor has a
    non-positive exponent, so the product never overflows even when the
    individual Ei values would.  Inputs broadcast like numpy ufuncs.
    """
    y_lo = np.atleast_1d(np.asarray(y_lo, dtype=np.float64))
    y_hi = np.atleast_1d(np.asarray(y_hi, dtype=np.float64))
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    y_lo, y_hi, x = np.broadcast_arrays(y_lo, y_hi, x)

    def scaled_term(y):
        # exp(-x) Ei(y) elementwise; exponents y - x are <= 0 by contract
        t = np.zeros(y.shape, dtype=np.float64)
        small = y <= _EI_SPLIT
        if np.any(small):
            t[small] = np.exp(-x[small]) * _ei_series(y[small])
        if np.any(~small):
            t[~small] = np.exp(y[~small] - x[~small]) * _ei_scaled_asymp(y[~small])
        return t

    return scaled_term(y_hi) - scaled_term(y_lo)


# ---------------------------------------------------------------------------
# Log-uniform noise uncertainty
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseUncertaintyModel:
    """Warden noise power with bounded multiplicative uncertainty.

    The noise power is log-uniform on ``[sigma2_n / rho, sigma2_n * rho]``;
    ``rho = 1`` collapses to a point mass at ``sigma2_n``.

    Attributes
    ----------
    sigma2_n : float
        Nominal noise power in watts, > 0.
    rho : float
        Uncertainty ratio, >= 1 (dimensionless).
    """

    sigma2_n: float
    rho: float

    def __post_init__(self):
        if not (self.sigma2_n > 0.0 and math.isfinite(self.sigma2_n)):
            raise ValueError(f"sigma2_n must be a positive finite power, got {self.sigma2_n!r}")
        if not (self.rho >= 1.0 and math.isfinite(self.rho)):
            raise ValueError(f"rho must be finite and >= 1, got {self.rho!r}")

    @property
    def support_low(self) -> float:
        return self.sigma2_n / self.rho

    @property
    def support_high(self) -> float:
        return self.sigma2_n * self.rho


def logu_cdf(model: NoiseUncertaintyModel, x):
    """CDF of the log-uniform noise power; handles the rho = 1 point mass.

    Accepts scalars or arrays; clamps to [0, 1] outside the support.
    """
    arr = np.asarray(x, dtype=np.float64)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if model.rho == 1.0:
        out = np.where(arr >= model.sigma2_n, 1.0, 0.0)
        return float(out[0]) if scalar else out
    a = model.support_low
    b = model.support_high
    out = np.zeros_like(arr)
    inside = (arr > a) & (arr < b)
    if np.any(inside):
        out[inside] = np.log(arr[inside] * (model.rho / model.sigma2_n)) / (2.0 * math.log(model.rho))
    out[arr >= b] = 1.0
    np.clip(out, 0.0, 1.0, out=out)
    return float(out[0]) if scalar else out


def logu_sample(model: NoiseUncertaintyModel, rng: np.random.Generator, size=None):
    """Draw noise powers by inverse transform: ``sigma2_n * rho^(2u - 1)``."""
    u = rng.random(size)
    return model.sigma2_n * model.rho ** (2.0 * u - 1.0)
