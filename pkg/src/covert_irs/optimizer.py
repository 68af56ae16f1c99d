"""Joint transmit-power and phase-shift optimization under a covertness cap.

The outer search walks a log-spaced power grid as a nested lattice: a
coarse chain pass warm-starts the phase solver lane to lane, then finer
levels halve the stride, each new lane solved from its already solved
neighbor only.  A grid with doubled resolution shares every coarse level
with the lighter one and merely appends lanes, so raising the search
effort never loses a candidate a lighter run found.  Two local refinement
passes then subdivide around the incumbent.  The inner solver is a
grid-quantized block-coordinate scan compiled in ``_bcd``.  Warden
thresholds and leakage caps depend only on power, never on the fading
draw, so one detector table per grid serves every realization.

Thread count comes from the COVERT_IRS_THREADS environment variable
(0 or unset = all available); results are identical for any setting.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
import numba

from . import detector
from ._bcd import solve_batch
from .channel import (
    ChannelRealization,
    IrsConfiguration,
    Scenario,
    covert_rate,
    effective_amplitude,
    pathloss_amplitude,
)
from .detector import DetectionOutcome, pmd_actual

_POWER_SPAN = 1e-6
_REFINE_SPLIT = 16
_REFINE_ROUNDS = 2
# coarsest chain level of the nested power lattice; 97 points keep about
# sixteen lanes per decade over the default six-decade span
_COARSE_MIN = 97
# refined-grid caps keep this much relative slack so a feasibility audit
# recomputing the threshold from scratch cannot flip on rounding noise
_CAP_MARGIN = 1e-6
_FEAS_SLACK = 1e-9


def configured_threads() -> int:
    """Apply COVERT_IRS_THREADS (0 = auto) and return the effective count."""
    raw = os.environ.get("COVERT_IRS_THREADS", "0").strip() or "0"
    try:
        req = int(raw)
    except ValueError:
        raise ValueError(f"COVERT_IRS_THREADS must be an integer, got {raw!r}") from None
    cap = numba.config.NUMBA_NUM_THREADS
    eff = cap if req <= 0 else min(req, cap)
    numba.set_num_threads(eff)
    return eff


@dataclass(frozen=True)
class SolveOptions:
    """Search-effort knobs; every random choice flows from ``rng_seed``."""

    restarts: int = 2
    bcd_sweeps: int = 40
    phase_grid: int = 32
    power_grid: int = 385
    tolerance: float = 1e-6
    rng_seed: int = 0

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError(f"restarts must be >= 1, got {self.restarts!r}")
        if self.bcd_sweeps < 1:
            raise ValueError(f"bcd_sweeps must be >= 1, got {self.bcd_sweeps!r}")
        if self.phase_grid < 1:
            raise ValueError(f"phase_grid must be >= 1, got {self.phase_grid!r}")
        if self.power_grid < 2:
            raise ValueError(f"power_grid must be >= 2, got {self.power_grid!r}")
        if not self.tolerance > 0.0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance!r}")


@dataclass(frozen=True)
class SolveResult:
    """Operating point returned by the joint solver."""

    p_a: float
    irs: IrsConfiguration
    rate: float
    outcome: DetectionOutcome
    feasible: bool
    iterations: int


def align_phases(real: ChannelRealization, target: str) -> IrsConfiguration:
    """Phases that co-phase every cascade element with the direct path.

    Elements with an exactly zero cascade amplitude get phase 0.
    """
    casc = real.cascade(target)
    direct = real.direct(target)
    ph = np.where(np.abs(casc) == 0.0, 0.0, np.angle(direct) - np.angle(casc))
    return IrsConfiguration(ph)


def _phase_grid_arrays(n_phases: int):
    gang = 2.0 * np.pi * np.arange(n_phases, dtype=np.float64) / n_phases
    return np.cos(gang), np.sin(gang), gang


def _cold_inits(opts: SolveOptions, n: int, capped: bool) -> np.ndarray:
    """Init stack for cold starts: ``restarts`` uniform rows, preceded by
    one constant-phase row per grid level when the cap can bind.

    Under a tight leakage cap the feasible phase set breaks into islands
    whose basins can be tiny; descent from every constant configuration
    reaches optima that uniform restarts miss with high probability.  With
    an unbounded cap coordinate ascent contracts to the aligned
    configuration from any start, so the ring would be dead weight.
    """
    rand = np.random.default_rng(opts.rng_seed).uniform(0.0, 2.0 * np.pi, (opts.restarts, n))
    if not capped:
        return rand
    gang = 2.0 * np.pi * np.arange(opts.phase_grid, dtype=np.float64) / opts.phase_grid
    ring = np.repeat(gang[:, None], n, axis=1)
    return np.concatenate([ring, rand], axis=0)


def _split(z: np.ndarray):
    return np.ascontiguousarray(z.real), np.ascontiguousarray(z.imag)


def _stack_cascades(reals, with_irs: bool):
    n = reals[0].n_units if with_irs else 0
    r_count = len(reals)
    u = np.zeros((r_count, n), dtype=np.complex128)
    v = np.zeros((r_count, n), dtype=np.complex128)
    db = np.zeros(r_count, dtype=np.complex128)
    dw = np.zeros(r_count, dtype=np.complex128)
    for i, real in enumerate(reals):
        if with_irs:
            u[i] = real.cascade("bob")
            v[i] = real.cascade("willie")
        db[i] = real.direct("bob")
        dw[i] = real.direct("willie")
    return u, v, db, dw


def _aligned_matrix(u: np.ndarray, db: np.ndarray) -> np.ndarray:
    if u.shape[1] == 0:
        return np.zeros(u.shape, dtype=np.float64)
    ph = np.angle(db)[:, None] - np.angle(u)
    ph = np.mod(ph, 2.0 * np.pi)
    ph[ph >= 2.0 * np.pi] = 0.0
    return np.where(np.abs(u) == 0.0, 0.0, ph)


def _unbounded_power(scenario: Scenario, gaw2: float) -> float:
    """Largest transmit power whose warden leakage bound is unbounded.

    Below this power the warden's optimal a-priori test already errs with
    probability >= xi, so every fading draw is feasible and no optimum can
    sit lower.  Returns 0.0 when no such power exists (e.g. xi = 1).
    """
    model = scenario.noise

    def unbounded(p):
        return math.isinf(detector.max_covert_leakage(model, p * gaw2, scenario.xi))

    p = model.sigma2_n / gaw2
    if unbounded(p):
        lo = p
        for _ in range(40):
            p *= 10.0
            if not unbounded(p):
                break
            lo = p
        else:
            return lo
        hi = p
    else:
        hi = p
        for _ in range(40):
            p *= 0.1
            if unbounded(p):
                break
            hi = p
        else:
            return 0.0
        lo = p
    for _ in range(60):
        mid = math.sqrt(lo * hi)
        if unbounded(mid):
            lo = mid
        else:
            hi = mid
    return lo


def _base_tables(scenario: Scenario, opts: SolveOptions, table_cache):
    model = scenario.noise
    gaw2 = pathloss_amplitude(scenario.d_aw, scenario.alpha) ** 2
    key = (model.sigma2_n, model.rho, scenario.xi, scenario.p_max, opts.power_grid, gaw2)
    if table_cache is not None and key in table_cache:
        return table_cache[key]
    # grid bottom sits a decade under the always-feasible power so a cap
    # crossing can never fall off the low end no matter how large p_max is;
    # the fixed relative span is the fallback when no such power exists
    floor = _unbounded_power(scenario, gaw2)
    if floor > 0.0:
        bottom = 0.1 * min(scenario.p_max, floor)
    else:
        bottom = scenario.p_max * _POWER_SPAN
    powers = np.geomspace(bottom, scenario.p_max, opts.power_grid)
    lam = powers * gaw2
    tau, pf, smax = detector.threshold_tables(model, lam, scenario.xi)
    caps = smax / powers
    entry = (powers, lam, tau, pf, smax, caps, gaw2)
    if table_cache is not None:
        table_cache[key] = entry
    return entry


def _chain_stride(n_p: int) -> int:
    """Stride of the coarsest chain level for an ``n_p``-point lattice.

    Repeatedly halves the lattice while it stays nested (n_p - 1 even) and
    at least ``_COARSE_MIN`` points remain, so lattices in the same
    doubling family share their chain level exactly.
    """
    m = n_p
    stride = 1
    while (m - 1) % 2 == 0 and (m - 1) // 2 + 1 >= _COARSE_MIN:
        m = (m - 1) // 2 + 1
        stride *= 2
    return stride


def _run_kernel(u, v, db, dw, powers, caps, windows, stride0, aligned, rand_inits, warm,
                use_warm, use_rand, grids, opts):
    r_count, n = u.shape
    n_levels = stride0.bit_length()
    gc, gs, gang = grids
    ur, ui = _split(u)
    vr, vi = _split(v)
    dbr, dbi = _split(db)
    dwr, dwi = _split(dw)
    out = {
        "found": np.zeros(r_count, dtype=np.int64),
        "idx": np.zeros(r_count, dtype=np.int64),
        "b2": np.zeros(r_count, dtype=np.float64),
        "w2": np.zeros(r_count, dtype=np.float64),
        "last_b2": np.zeros(r_count, dtype=np.float64),
        "last_w2": np.zeros(r_count, dtype=np.float64),
        "last_feas": np.zeros(r_count, dtype=np.int64),
        "sweeps": np.zeros(r_count, dtype=np.int64),
        "ph": np.zeros((r_count, n), dtype=np.float64),
        "last_ph": np.zeros((r_count, n), dtype=np.float64),
        "lvl_found": np.zeros((r_count, n_levels), dtype=np.int64),
        "lvl_idx": np.zeros((r_count, n_levels), dtype=np.int64),
        "lvl_b2": np.zeros((r_count, n_levels), dtype=np.float64),
        "lvl_w2": np.zeros((r_count, n_levels), dtype=np.float64),
        "lvl_ph": np.zeros((r_count, n_levels, n), dtype=np.float64),
    }
    solve_batch(
        ur, ui, vr, vi, dbr, dbi, dwr, dwi,
        powers, caps, windows, stride0,
        aligned, rand_inits, warm, use_warm, use_rand,
        gc, gs, gang, opts.bcd_sweeps, opts.tolerance,
        out["found"], out["idx"], out["b2"], out["w2"],
        out["last_b2"], out["last_w2"], out["last_feas"], out["sweeps"],
        out["ph"], out["last_ph"],
        out["lvl_found"], out["lvl_idx"], out["lvl_b2"], out["lvl_w2"], out["lvl_ph"],
    )
    return out


def _refine_stage(u, v, db, dw, scenario, opts, grids, aligned, gaw2,
                  powers, tau, pf, smax, found0, idx0, b20, w20, ph0, step):
    """Two rounds of local power subdivision around one level's incumbent.

    Self-contained: the rounds iterate on the stage's own incumbent, never
    the caller's running best, so the stage is a pure function of the level
    snapshot it starts from and is replayed identically by any denser run
    that shares the level.  Returns per-realization candidate arrays.
    """
    r_count, n = u.shape
    model = scenario.noise
    st = {
        "found": found0.copy(),
        "p_a": np.zeros(r_count, dtype=np.float64),
        "bob2": np.zeros(r_count, dtype=np.float64),
        "willie2": np.zeros(r_count, dtype=np.float64),
        "phases": np.zeros((r_count, n), dtype=np.float64),
        "tau": np.zeros(r_count, dtype=np.float64),
        "pfa": np.zeros(r_count, dtype=np.float64),
        "smax": np.zeros(r_count, dtype=np.float64),
        "sweeps": np.zeros(r_count, dtype=np.int64),
    }
    sel = np.flatnonzero(found0)
    st["p_a"][sel] = powers[idx0[sel]]
    st["bob2"][sel] = b20[sel]
    st["willie2"][sel] = w20[sel]
    st["phases"][sel] = ph0[sel]
    st["tau"][sel] = tau[idx0[sel]]
    st["pfa"][sel] = pf[idx0[sel]]
    st["smax"][sel] = smax[idx0[sel]]
    st["metric"] = np.where(found0, st["bob2"] * st["p_a"], -1.0)

    axis_cur, tau_cur, pf_cur, smax_cur = powers, tau, pf, smax
    idx_cur = idx0.copy()
    step_cur = step
    for _ in range(_REFINE_ROUNDS):
        if sel.size == 0 or axis_cur.shape[0] < 2:
            break
        i = idx_cur[sel]
        p_lo = axis_cur[np.maximum(i - step_cur, 0)]
        p_mid = axis_cur[i]
        p_hi = axis_cur[np.minimum(i + step_cur, axis_cur.shape[0] - 1)]
        t = np.linspace(0.0, 1.0, _REFINE_SPLIT + 1)
        seg1 = np.exp(np.log(p_lo)[:, None] * (1.0 - t)[None, :] + np.log(p_mid)[:, None] * t[None, :])
        seg2 = np.exp(np.log(p_mid)[:, None] * (1.0 - t)[None, :] + np.log(p_hi)[:, None] * t[None, :])
        seg1[:, 0] = p_lo
        seg1[:, -1] = p_mid
        seg2[:, 0] = p_mid
        seg2[:, -1] = p_hi
        vals = np.unique(np.minimum(np.concatenate([seg1.ravel(), seg2.ravel()]), scenario.p_max))

        pos = np.searchsorted(axis_cur, vals)
        pos_c = np.minimum(pos, axis_cur.shape[0] - 1)
        is_old = axis_cur[pos_c] == vals
        tau2 = np.empty_like(vals)
        pf2 = np.empty_like(vals)
        smax2 = np.empty_like(vals)
        caps2 = np.empty_like(vals)
        tau2[is_old] = tau_cur[pos_c[is_old]]
        pf2[is_old] = pf_cur[pos_c[is_old]]
        smax2[is_old] = smax_cur[pos_c[is_old]]
        caps2[is_old] = (1.0 - _CAP_MARGIN) * smax2[is_old] / vals[is_old]
        new = ~is_old
        if np.any(new):
            nv = vals[new]
            j = np.clip(np.searchsorted(axis_cur, nv, side="right") - 1, 0, axis_cur.shape[0] - 2)
            tau_n, pf_n, smax_n = detector.threshold_tables_bracketed(
                model, nv * gaw2, tau_cur[j], tau_cur[j + 1], scenario.xi
            )
            tau2[new] = tau_n
            pf2[new] = pf_n
            smax2[new] = smax_n
            caps2[new] = (1.0 - _CAP_MARGIN) * smax_n / nv

        windows2 = np.empty((sel.size, 2), dtype=np.int64)
        windows2[:, 0] = np.searchsorted(vals, p_lo)
        windows2[:, 1] = np.searchsorted(vals, p_hi, side="right")
        out2 = _run_kernel(
            u[sel], v[sel], db[sel], dw[sel], vals, caps2, windows2, 1,
            aligned[sel], np.zeros((0, n)), st["phases"][sel], 1, 0, grids, opts,
        )
        st["sweeps"][sel] += out2["sweeps"]
        idx_new = np.empty(sel.size, dtype=np.int64)
        improved = (out2["found"] == 1) & (out2["b2"] * vals[out2["idx"]] > st["metric"][sel])
        rows = sel[improved]
        idx_new[improved] = out2["idx"][improved]
        idx_new[~improved] = np.searchsorted(vals, st["p_a"][sel[~improved]])
        st["p_a"][rows] = vals[out2["idx"][improved]]
        st["bob2"][rows] = out2["b2"][improved]
        st["willie2"][rows] = out2["w2"][improved]
        st["phases"][rows] = out2["ph"][improved]
        st["tau"][rows] = tau2[out2["idx"][improved]]
        st["pfa"][rows] = pf2[out2["idx"][improved]]
        st["smax"][rows] = smax2[out2["idx"][improved]]
        st["metric"][rows] = st["bob2"][rows] * st["p_a"][rows]

        axis_cur, tau_cur, pf_cur, smax_cur = vals, tau2, pf2, smax2
        full_idx = np.zeros(r_count, dtype=np.int64)
        full_idx[sel] = idx_new
        idx_cur = full_idx
        step_cur = 1
    return st


def _batch_joint(u, v, db, dw, scenario: Scenario, opts: SolveOptions, table_cache=None):
    """Shared engine: solve every realization row over the power grid.

    Returns per-realization arrays; rows with ``found`` False carry the
    zero-power fallback (no transmit power satisfies the cap).
    """
    r_count, n = u.shape
    model = scenario.noise
    res = {
        "found": np.zeros(r_count, dtype=bool),
        "p_a": np.zeros(r_count, dtype=np.float64),
        "bob2": np.zeros(r_count, dtype=np.float64),
        "willie2": np.zeros(r_count, dtype=np.float64),
        "phases": np.zeros((r_count, n), dtype=np.float64),
        "tau": np.zeros(r_count, dtype=np.float64),
        "pfa": np.zeros(r_count, dtype=np.float64),
        "smax": np.zeros(r_count, dtype=np.float64),
        "feas_pmax": np.zeros(r_count, dtype=bool),
        "sweeps": np.zeros(r_count, dtype=np.int64),
    }
    if scenario.p_max == 0.0:
        res["feas_pmax"][:] = True
        return res

    configured_threads()
    powers, lam, tau, pf, smax, caps, gaw2 = _base_tables(scenario, opts, table_cache)
    n_p = powers.shape[0]
    grids = _phase_grid_arrays(opts.phase_grid)
    aligned = _aligned_matrix(u, db)
    rand_inits = _cold_inits(opts, n, bool(np.isfinite(caps[0])))
    windows = np.tile(np.array([[0, n_p]], dtype=np.int64), (r_count, 1))
    no_warm = np.zeros((r_count, n), dtype=np.float64)

    stride0 = _chain_stride(n_p)
    out = _run_kernel(u, v, db, dw, powers, caps, windows, stride0,
                      aligned, rand_inits, no_warm, 0, 1, grids, opts)

    found = out["found"].astype(bool)
    res["found"] = found
    res["feas_pmax"] = out["last_feas"].astype(bool)
    res["sweeps"] = out["sweeps"].copy()
    idx_base = out["idx"]
    res["p_a"][found] = powers[idx_base[found]]
    res["bob2"][found] = out["b2"][found]
    res["willie2"][found] = out["w2"][found]
    res["phases"][found] = out["ph"][found]
    res["tau"][found] = tau[idx_base[found]]
    res["pfa"][found] = pf[idx_base[found]]
    res["smax"][found] = smax[idx_base[found]]
    metric = np.where(found, res["bob2"] * res["p_a"], -1.0)

    # one refinement stage per lattice level, coarsest first; each stage is
    # a function of its level's prefix incumbent alone, so a denser grid in
    # the same doubling family replays the lighter run's stages before
    # adding its own and the merged best stays monotone in search effort
    for lv in range(stride0.bit_length()):
        stage = _refine_stage(
            u, v, db, dw, scenario, opts, grids, aligned, gaw2,
            powers, tau, pf, smax,
            out["lvl_found"][:, lv].astype(bool), out["lvl_idx"][:, lv],
            out["lvl_b2"][:, lv], out["lvl_w2"][:, lv], out["lvl_ph"][:, lv],
            stride0 >> lv,
        )
        res["sweeps"] += stage["sweeps"]
        better = stage["found"] & (
            (stage["metric"] > metric)
            | ((stage["metric"] == metric) & (stage["p_a"] < res["p_a"]))
        )
        rows = np.flatnonzero(better)
        for key in ("p_a", "bob2", "willie2", "tau", "pfa", "smax"):
            res[key][rows] = stage[key][rows]
        res["phases"][rows] = stage["phases"][rows]
        metric[rows] = stage["metric"][rows]
    return res


def _result_from_row(real: ChannelRealization, scenario: Scenario, res: dict, row: int,
                     with_irs: bool) -> SolveResult:
    model = scenario.noise
    iterations = int(res["sweeps"][row])
    if not res["found"][row]:
        # zero-power fallback: stay silent; PFA + PMD = 1 at any threshold
        # inside the support, reported at the nominal noise power since
        # lam = 0 leaves no optimal threshold to speak of
        tau0 = model.sigma2_n
        p_fa = detector.pfa(model, tau0)
        p_md = pmd_actual(model, tau0, 0.0)
        outcome = DetectionOutcome(tau0, p_fa, p_md, p_fa + p_md)
        n = real.n_units if with_irs else 0
        return SolveResult(0.0, IrsConfiguration(np.zeros(n)), 0.0, outcome,
                           bool(outcome.error_sum >= scenario.xi - _FEAS_SLACK), iterations)
    p_a = float(res["p_a"][row])
    if with_irs:
        irs = IrsConfiguration(res["phases"][row])
        amp_b = effective_amplitude(real, irs, "bob")
        amp_w = effective_amplitude(real, irs, "willie")
    else:
        irs = IrsConfiguration(np.zeros(0))
        amp_b = real.direct("bob")
        amp_w = real.direct("willie")
    rate = covert_rate(amp_b, p_a, scenario.sigma2_b)
    s_w = abs(amp_w) ** 2 * p_a
    tau = float(res["tau"][row])
    p_fa = float(res["pfa"][row])
    p_md = pmd_actual(model, tau, s_w)
    outcome = DetectionOutcome(tau, p_fa, p_md, p_fa + p_md)
    return SolveResult(p_a, irs, rate, outcome,
                       bool(outcome.error_sum >= scenario.xi - _FEAS_SLACK), iterations)


def solve_joint(real: ChannelRealization, scenario: Scenario, opts: SolveOptions) -> SolveResult:
    """Maximize Bob's rate over transmit power and phases, covertly.

    Power is searched on a log grid spanning six decades below ``p_max``
    with two local refinement passes; phases by the compiled BCD scan.
    Grids in the same nested-doubling family (769 from 385, and so on)
    visit identical coarse levels, so denser search settings dominate the
    lighter ones they extend.  If no power admits a covert configuration
    the zero-power fallback is returned (rate 0, which is always covert).
    """
    if real.n_units != scenario.n_units:
        raise ValueError(
            f"realization has {real.n_units} elements but scenario expects {scenario.n_units}"
        )
    u, v, db, dw = _stack_cascades([real], with_irs=True)
    res = _batch_joint(u, v, db, dw, scenario, opts)
    return _result_from_row(real, scenario, res, 0, with_irs=True)


def solve_no_irs(real: ChannelRealization, scenario: Scenario, opts: SolveOptions) -> SolveResult:
    """Same power search with the surface absent (direct paths only)."""
    u, v, db, dw = _stack_cascades([real], with_irs=False)
    res = _batch_joint(u, v, db, dw, scenario, opts)
    return _result_from_row(real, scenario, res, 0, with_irs=False)


def solve_phases_constrained(
    real: ChannelRealization,
    p_a: float,
    s_max: float,
    opts: SolveOptions,
) -> tuple[IrsConfiguration, bool]:
    """Best phases at fixed power under the leakage cap ``s_max``.

    Runs the grid-quantized coordinate scan from the aligned start, one
    constant-phase start per grid level and ``opts.restarts`` uniform
    restarts, keeping the best feasible endpoint.  When every visited
    configuration leaks above the cap, the least-leaky one is returned
    with the flag False.
    """
    if not (p_a > 0.0 and math.isfinite(p_a)):
        raise ValueError(f"p_a must be positive and finite, got {p_a!r}")
    if not s_max >= 0.0:
        raise ValueError(f"s_max must be nonnegative, got {s_max!r}")
    configured_threads()
    u, v, db, dw = _stack_cascades([real], with_irs=True)
    n = real.n_units
    aligned = _aligned_matrix(u, db)
    powers = np.array([p_a])
    caps = np.array([s_max / p_a])
    windows = np.array([[0, 1]], dtype=np.int64)
    inits = _cold_inits(opts, n, bool(np.isfinite(caps[0])))
    out = _run_kernel(u, v, db, dw, powers, caps, windows, 1, aligned, inits,
                      np.zeros((1, n)), 0, 1, _phase_grid_arrays(opts.phase_grid), opts)
    return IrsConfiguration(out["last_ph"][0]), bool(out["last_feas"][0])
