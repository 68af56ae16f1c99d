"""Compiled block-coordinate phase search.

One element at a time, scan a fixed phase grid (plus the element's current
phase) and keep the best Bob power among candidates that respect the Willie
leakage cap, falling back to the least-leaky candidate when none does.
Running complex sums are updated incrementally and refreshed at each sweep
boundary so drift cannot accumulate across sweeps.

All outputs are written to per-realization slots, so results are identical
for any thread count.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

_TINY = 1e-300


@njit(cache=True)
def _run_bcd(ur, ui, vr, vi, dbr, dbi, dwr, dwi, cap, gc, gs, gang, ph, max_sweeps, tol):
    """One BCD run from the phases in ``ph`` (modified in place).

    Returns (bob_power, willie_power, feasible, sweeps_used) where the
    powers are squared composite amplitudes per unit transmit power.
    """
    n = ph.shape[0]
    nj = gc.shape[0]
    prev_b2 = -1.0
    prev_w2 = math.inf
    prev_feas = False
    sweeps_used = 0
    br = dbr
    bi = dbi
    wr = dwr
    wi = dwi
    for s in range(max_sweeps):
        # fresh sums at the sweep boundary
        br = dbr
        bi = dbi
        wr = dwr
        wi = dwi
        for k in range(n):
            c = math.cos(ph[k])
            si = math.sin(ph[k])
            br += ur[k] * c - ui[k] * si
            bi += ur[k] * si + ui[k] * c
            wr += vr[k] * c - vi[k] * si
            wi += vr[k] * si + vi[k] * c
        b2 = br * br + bi * bi
        w2 = wr * wr + wi * wi
        feas = w2 <= cap
        if s > 0:
            if feas and prev_feas:
                if b2 - prev_b2 <= tol * max(prev_b2, _TINY):
                    break
            elif (not feas) and (not prev_feas):
                if prev_w2 - w2 <= tol * max(prev_w2, _TINY):
                    break
        prev_b2 = b2
        prev_w2 = w2
        prev_feas = feas
        for k in range(n):
            c = math.cos(ph[k])
            si = math.sin(ph[k])
            bbr = br - (ur[k] * c - ui[k] * si)
            bbi = bi - (ur[k] * si + ui[k] * c)
            wbr = wr - (vr[k] * c - vi[k] * si)
            wbi = wi - (vr[k] * si + vi[k] * c)
            # candidate scan: current phase first, then the grid
            best_feas_b2 = -1.0
            best_feas_c = -1
            best_w2 = math.inf
            best_w2_c = -1
            for cand in range(nj + 1):
                if cand == 0:
                    cc = c
                    cs = si
                else:
                    cc = gc[cand - 1]
                    cs = gs[cand - 1]
                cwr = wbr + vr[k] * cc - vi[k] * cs
                cwi = wbi + vr[k] * cs + vi[k] * cc
                cw2 = cwr * cwr + cwi * cwi
                if cw2 < best_w2:
                    best_w2 = cw2
                    best_w2_c = cand
                if cw2 <= cap:
                    cbr = bbr + ur[k] * cc - ui[k] * cs
                    cbi = bbi + ur[k] * cs + ui[k] * cc
                    cb2 = cbr * cbr + cbi * cbi
                    if cb2 > best_feas_b2:
                        best_feas_b2 = cb2
                        best_feas_c = cand
            chosen = best_feas_c if best_feas_c >= 0 else best_w2_c
            if chosen == 0:
                nc = c
                ns = si
            else:
                nc = gc[chosen - 1]
                ns = gs[chosen - 1]
                ph[k] = gang[chosen - 1]
            br = bbr + ur[k] * nc - ui[k] * ns
            bi = bbi + ur[k] * ns + ui[k] * nc
            wr = wbr + vr[k] * nc - vi[k] * ns
            wi = wbi + vr[k] * ns + vi[k] * nc
        sweeps_used += 1
    # final fresh recompute
    br = dbr
    bi = dbi
    wr = dwr
    wi = dwi
    for k in range(n):
        c = math.cos(ph[k])
        si = math.sin(ph[k])
        br += ur[k] * c - ui[k] * si
        bi += ur[k] * si + ui[k] * c
        wr += vr[k] * c - vi[k] * si
        wi += vr[k] * si + vi[k] * c
    b2 = br * br + bi * bi
    w2 = wr * wr + wi * wi
    return b2, w2, w2 <= cap, sweeps_used


@njit(cache=True)
def _solve_lane(
    ur, ui, vr, vi, dbr, dbi, dwr, dwi, cap,
    inits, ninits, gc, gs, gang, max_sweeps, tol,
    ph_work, loc_ph,
):
    """Run BCD from each of the first ``ninits`` rows of ``inits`` at one cap.

    Keeps the feasible endpoint with the largest Bob power, or the least
    leaky endpoint when none is feasible; ties keep the earliest row so a
    longer init stack can only replace a result by strictly beating it.
    Returns (b2, w2, feasible, sweeps).
    """
    n = ph_work.shape[0]
    loc_feas = False
    loc_any = False
    loc_b2 = -1.0
    loc_w2 = math.inf
    sweeps = 0
    for k in range(ninits):
        for m in range(n):
            ph_work[m] = inits[k, m]
        b2, w2, feas, sw = _run_bcd(
            ur, ui, vr, vi, dbr, dbi, dwr, dwi, cap, gc, gs, gang, ph_work, max_sweeps, tol
        )
        sweeps += sw
        better = False
        if feas:
            if (not loc_feas) or b2 > loc_b2:
                better = True
        else:
            if not loc_any:
                better = True
            elif (not loc_feas) and w2 < loc_w2:
                better = True
        if better:
            loc_feas = feas
            loc_b2 = b2
            loc_w2 = w2
            for m in range(n):
                loc_ph[m] = ph_work[m]
        loc_any = True
    return loc_b2, loc_w2, loc_feas, sweeps


@njit(cache=True)
def _solve_caps(
    ur, ui, vr, vi, dbr, dbi, dwr, dwi,
    powers, caps, start, stop, stride0,
    inits0, aligned, gc, gs, gang, max_sweeps, tol,
    best_ph, last_ph,
    lvl_found, lvl_idx, lvl_b2, lvl_w2, lvl_ph,
):
    """Solve one realization over caps[start:stop] on a nested lattice.

    The chain pass walks lanes start, start+stride0, ... warm-starting each
    from the previous coarse winner (the first lane uses ``inits0``).  Finer
    levels then halve the stride, solving each new lane from its already
    solved left neighbor and the aligned configuration only.  Because a
    lattice with twice the resolution shares its coarse levels with the
    lighter one and merely appends lanes, denser grids can never lose a
    candidate a lighter run found.  ``stride0`` must divide stop-start-1.

    After the chain pass and after each finer level the running best is
    snapshotted into the ``lvl_*`` slots (level 0 first), so callers can
    reconstruct what any coarser lattice in the family would have produced.
    Returns (found, best_idx, best_b2, best_w2, last_b2, last_w2,
    last_feasible, sweeps_total); ``best_*`` track the feasible candidate
    maximizing bob_power * power, ties keeping the smallest power.
    """
    n = aligned.shape[0]
    ph_work = np.empty(n, dtype=np.float64)
    loc_ph = np.empty(n, dtype=np.float64)
    lane_inits = np.empty((2, n), dtype=np.float64)
    w_ph = np.empty((stop - start, n), dtype=np.float64)
    found = False
    best_metric = -1.0
    best_power = math.inf
    best_idx = -1
    best_b2 = 0.0
    best_w2 = 0.0
    last_b2 = 0.0
    last_w2 = 0.0
    last_feas = False
    sweeps_total = 0
    i = start
    prev = -1
    while i < stop:
        if prev < 0:
            loc_b2, loc_w2, loc_feas, sw = _solve_lane(
                ur, ui, vr, vi, dbr, dbi, dwr, dwi, caps[i],
                inits0, inits0.shape[0], gc, gs, gang, max_sweeps, tol,
                ph_work, loc_ph,
            )
        else:
            for m in range(n):
                lane_inits[0, m] = w_ph[prev, m]
                lane_inits[1, m] = aligned[m]
            loc_b2, loc_w2, loc_feas, sw = _solve_lane(
                ur, ui, vr, vi, dbr, dbi, dwr, dwi, caps[i],
                lane_inits, 2, gc, gs, gang, max_sweeps, tol,
                ph_work, loc_ph,
            )
        sweeps_total += sw
        for m in range(n):
            w_ph[i - start, m] = loc_ph[m]
        if loc_feas:
            metric = loc_b2 * powers[i]
            if metric > best_metric or (metric == best_metric and powers[i] < best_power):
                found = True
                best_metric = metric
                best_power = powers[i]
                best_idx = i
                best_b2 = loc_b2
                best_w2 = loc_w2
                for m in range(n):
                    best_ph[m] = loc_ph[m]
        if i == stop - 1:
            last_b2 = loc_b2
            last_w2 = loc_w2
            last_feas = loc_feas
            for m in range(n):
                last_ph[m] = loc_ph[m]
        prev = i - start
        i += stride0
    level = 0
    lvl_found[level] = 1 if found else 0
    lvl_idx[level] = best_idx
    lvl_b2[level] = best_b2
    lvl_w2[level] = best_w2
    for m in range(n):
        lvl_ph[level, m] = best_ph[m]
    stride = stride0 // 2
    while stride >= 1:
        i = start + stride
        while i < stop:
            for m in range(n):
                lane_inits[0, m] = w_ph[i - start - stride, m]
                lane_inits[1, m] = aligned[m]
            loc_b2, loc_w2, loc_feas, sw = _solve_lane(
                ur, ui, vr, vi, dbr, dbi, dwr, dwi, caps[i],
                lane_inits, 2, gc, gs, gang, max_sweeps, tol,
                ph_work, loc_ph,
            )
            sweeps_total += sw
            for m in range(n):
                w_ph[i - start, m] = loc_ph[m]
            if loc_feas:
                metric = loc_b2 * powers[i]
                if metric > best_metric or (metric == best_metric and powers[i] < best_power):
                    found = True
                    best_metric = metric
                    best_power = powers[i]
                    best_idx = i
                    best_b2 = loc_b2
                    best_w2 = loc_w2
                    for m in range(n):
                        best_ph[m] = loc_ph[m]
            i += 2 * stride
        level += 1
        lvl_found[level] = 1 if found else 0
        lvl_idx[level] = best_idx
        lvl_b2[level] = best_b2
        lvl_w2[level] = best_w2
        for m in range(n):
            lvl_ph[level, m] = best_ph[m]
        stride //= 2
    return found, best_idx, best_b2, best_w2, last_b2, last_w2, last_feas, sweeps_total


@njit(parallel=True, cache=True)
def solve_batch(
    cur, cui, cvr, cvi, dbr, dbi, dwr, dwi,
    powers, caps, windows, stride0,
    aligned, rand_inits, warm, use_warm, use_rand,
    gc, gs, gang, max_sweeps, tol,
    out_found, out_idx, out_b2, out_w2,
    out_last_b2, out_last_w2, out_last_feas, out_sweeps, out_ph, out_last_ph,
    out_lvl_found, out_lvl_idx, out_lvl_b2, out_lvl_w2, out_lvl_ph,
):
    """Per-realization cap sweep; every output lands in slot r only."""
    n_real = dbr.shape[0]
    n = aligned.shape[1]
    n_rand = rand_inits.shape[0]
    for r in prange(n_real):
        k0 = (1 if use_warm else 0) + 1 + (n_rand if use_rand else 0)
        inits0 = np.empty((k0, n), dtype=np.float64)
        pos = 0
        if use_warm:
            for m in range(n):
                inits0[pos, m] = warm[r, m]
            pos += 1
        for m in range(n):
            inits0[pos, m] = aligned[r, m]
        pos += 1
        if use_rand:
            for k in range(n_rand):
                for m in range(n):
                    inits0[pos + k, m] = rand_inits[k, m]
        best_ph = np.zeros(n, dtype=np.float64)
        last_ph = np.zeros(n, dtype=np.float64)
        found, bidx, b2, w2, lb2, lw2, lfeas, sw = _solve_caps(
            cur[r], cui[r], cvr[r], cvi[r],
            dbr[r], dbi[r], dwr[r], dwi[r],
            powers, caps, windows[r, 0], windows[r, 1], stride0,
            inits0, aligned[r], gc, gs, gang, max_sweeps, tol,
            best_ph, last_ph,
            out_lvl_found[r], out_lvl_idx[r], out_lvl_b2[r], out_lvl_w2[r], out_lvl_ph[r],
        )
        out_found[r] = 1 if found else 0
        out_idx[r] = bidx
        out_b2[r] = b2
        out_w2[r] = w2
        out_last_b2[r] = lb2
        out_last_w2[r] = lw2
        out_last_feas[r] = 1 if lfeas else 0
        out_sweeps[r] = sw
        for m in range(n):
            out_ph[r, m] = best_ph[m]
            out_last_ph[r, m] = last_ph[m]
