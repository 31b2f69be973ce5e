"""Numba kernels for the diagonal scan and the chain simulations.

Everything here is deterministic given its inputs; all randomness comes
in as precomputed uniform arrays so that reproducibility is owned by the
callers' counter-based RNG streams. Integer-valued float64 score sums
stay exact (values are tiny relative to 2**53), so the lattice case
needs no separate integer path.
"""

from __future__ import annotations

import numpy as np
from numba import njit


# ---------------------------------------------------------------------------
# diagonal scans
#
# Diagonals are indexed by offset; a diagonal with base (i0, j0) has
# L = min(m - i0, n - j0) interior cells. Walk step k (destination cell
# (i0+k+1, j0+k+1) of the score matrix) adds the score of the symbol
# pair at index (i0+k, j0+k); for pair-transition scores step k=0 has no
# predecessor pair on the diagonal and adds nothing. An excursion opens
# when the walk leaves zero and closes when it returns (score dropped)
# or the diagonal ends (boundary); start cell (i0+s, j0+s), length
# delta = close_step - s + 1 (drop) or L - s (boundary).


@njit(cache=True)
def scan_count_pair(x, y, tab, thresholds):
    m = x.size
    n = y.size
    counts = np.zeros(thresholds.size, np.int64)
    m_n = 0.0
    nexc = 0
    for off in range(-(n - 1), m):
        i0 = off if off > 0 else 0
        j0 = -off if off < 0 else 0
        L = min(m - i0, n - j0)
        T = 0.0
        peak = 0.0
        for k in range(L):
            v = T + tab[x[i0 + k], y[j0 + k]]
            if v <= 0.0:
                T = 0.0
                if peak > 0.0:
                    nexc += 1
                    for ti in range(thresholds.size):
                        if peak > thresholds[ti]:
                            counts[ti] += 1
                    peak = 0.0
            else:
                T = v
                if v > peak:
                    peak = v
                if v > m_n:
                    m_n = v
        if peak > 0.0:
            nexc += 1
            for ti in range(thresholds.size):
                if peak > thresholds[ti]:
                    counts[ti] += 1
    return m_n, counts, nexc


@njit(cache=True)
def scan_count_trans(x, y, tab4, thresholds):
    m = x.size
    n = y.size
    counts = np.zeros(thresholds.size, np.int64)
    m_n = 0.0
    nexc = 0
    for off in range(-(n - 1), m):
        i0 = off if off > 0 else 0
        j0 = -off if off < 0 else 0
        L = min(m - i0, n - j0)
        T = 0.0
        peak = 0.0
        for k in range(1, L):
            v = T + tab4[x[i0 + k - 1], y[j0 + k - 1], x[i0 + k], y[j0 + k]]
            if v <= 0.0:
                T = 0.0
                if peak > 0.0:
                    nexc += 1
                    for ti in range(thresholds.size):
                        if peak > thresholds[ti]:
                            counts[ti] += 1
                    peak = 0.0
            else:
                T = v
                if v > peak:
                    peak = v
                if v > m_n:
                    m_n = v
        if peak > 0.0:
            nexc += 1
            for ti in range(thresholds.size):
                if peak > thresholds[ti]:
                    counts[ti] += 1
    return m_n, counts, nexc


@njit(cache=True)
def scan_records_pair(x, y, tab, min_peak, out_i, out_j, out_delta, out_peak, out_end):
    """Fill excursion records (peak > min_peak); returns the number found.
    Buffers must be sized from a prior counting pass."""
    m = x.size
    n = y.size
    w = 0
    cap = out_i.size
    for off in range(-(n - 1), m):
        i0 = off if off > 0 else 0
        j0 = -off if off < 0 else 0
        L = min(m - i0, n - j0)
        T = 0.0
        peak = 0.0
        start = 0
        for k in range(L):
            v = T + tab[x[i0 + k], y[j0 + k]]
            if v <= 0.0:
                T = 0.0
                if peak > 0.0:
                    if peak > min_peak and w < cap:
                        out_i[w] = i0 + start
                        out_j[w] = j0 + start
                        out_delta[w] = k - start + 1
                        out_peak[w] = peak
                        out_end[w] = 0
                        w += 1
                    peak = 0.0
            else:
                if T == 0.0:
                    start = k
                T = v
                if v > peak:
                    peak = v
        if peak > 0.0 and peak > min_peak and w < cap:
            out_i[w] = i0 + start
            out_j[w] = j0 + start
            out_delta[w] = L - start
            out_peak[w] = peak
            out_end[w] = 1
            w += 1
    return w


@njit(cache=True)
def scan_records_trans(x, y, tab4, min_peak, out_i, out_j, out_delta, out_peak, out_end):
    m = x.size
    n = y.size
    w = 0
    cap = out_i.size
    for off in range(-(n - 1), m):
        i0 = off if off > 0 else 0
        j0 = -off if off < 0 else 0
        L = min(m - i0, n - j0)
        T = 0.0
        peak = 0.0
        start = 0
        for k in range(1, L):
            v = T + tab4[x[i0 + k - 1], y[j0 + k - 1], x[i0 + k], y[j0 + k]]
            if v <= 0.0:
                T = 0.0
                if peak > 0.0:
                    if peak > min_peak and w < cap:
                        out_i[w] = i0 + start
                        out_j[w] = j0 + start
                        out_delta[w] = k - start + 1
                        out_peak[w] = peak
                        out_end[w] = 0
                        w += 1
                    peak = 0.0
            else:
                if T == 0.0:
                    start = k
                T = v
                if v > peak:
                    peak = v
        if peak > 0.0 and peak > min_peak and w < cap:
            out_i[w] = i0 + start
            out_j[w] = j0 + start
            out_delta[w] = L - start
            out_peak[w] = peak
            out_end[w] = 1
            w += 1
    return w


# ---------------------------------------------------------------------------
# chain sampling


@njit(cache=True)
def walk_chain(cum_init, cum_rows, u, out):
    """States from uniforms: initial state from cum_init, then rows."""
    n = out.size
    s = np.searchsorted(cum_init, u[0], side="right")
    if s >= cum_init.size:
        s = cum_init.size - 1
    out[0] = s
    for i in range(1, n):
        row = cum_rows[s]
        t = np.searchsorted(row, u[i], side="right")
        if t >= row.size:
            t = row.size - 1
        s = t
        out[i] = s
    return out


# ---------------------------------------------------------------------------
# ladder-epoch statistics
#
# The pair chain lives on E^2 states s = x*E + y; step scores come from
# a unified (E^2, E^2) table indexed [from, to] (pair scores depend on
# the destination only). The reflected height e = S - running_min hits 0
# exactly at the descending ladder epochs.


@njit(cache=True)
def ladder_kernel(cum_rows, score, u, s, e, dt, prev_ls, max_cycles, tau_cap):
    """Run ladder cycles until max_cycles or the uniforms run out.

    Returns (used, ncyc, s, e, dt, prev_ls, counts, trans, sum_dt,
    sum_dt2, sum_drop, sum_drop2, tau_hist, steps).
    """
    n_states = cum_rows.shape[0]
    counts = np.zeros(n_states, np.int64)
    trans = np.zeros((n_states, n_states), np.int64)
    tau_hist = np.zeros(tau_cap, np.int64)
    sum_dt = 0.0
    sum_dt2 = 0.0
    sum_drop = 0.0
    sum_drop2 = 0.0
    ncyc = 0
    used = 0
    steps = 0
    for i in range(u.size):
        row = cum_rows[s]
        t = np.searchsorted(row, u[i], side="right")
        if t >= n_states:
            t = n_states - 1
        e += score[s, t]
        s = t
        dt += 1
        steps += 1
        used = i + 1
        if e <= 0.0:
            counts[s] += 1
            if prev_ls >= 0:
                trans[prev_ls, s] += 1
            prev_ls = s
            sum_dt += dt
            sum_dt2 += float(dt) * float(dt)
            sum_drop += e
            sum_drop2 += e * e
            h = dt if dt < tau_cap else tau_cap - 1
            tau_hist[h] += 1
            ncyc += 1
            e = 0.0
            dt = 0
            if ncyc >= max_cycles:
                break
    return (
        used, ncyc, s, e, dt, prev_ls,
        counts, trans, sum_dt, sum_dt2, sum_drop, sum_drop2, tau_hist, steps,
    )


@njit(cache=True)
def tail_tilted_kernel(
    cum_rows, score, r_vec, theta, s0, u_grid, u, max_compl,
    in_traj, S, hi, s, next_u,
    w_sum, w2_sum,
):
    """Importance-sampling first-passage weights under the tilted chain.

    Each trajectory starts in s0 with S = 0; at the first strict crossing
    of each grid level the likelihood-ratio weight
    r(s0) / (r(s_tau) exp(theta S_tau)) is banked for that level. The
    trajectory ends on ruin (S <= 0) or once every level is crossed;
    the kernel stops after max_compl completions so every banked weight
    belongs to a counted trajectory.
    Returns (n_completed, used, in_traj, S, hi, s, next_u).
    """
    n_states = cum_rows.shape[0]
    K = u_grid.size
    ncompl = 0
    used = 0
    for i in range(u.size):
        if in_traj == 0:
            s = s0
            S = 0.0
            hi = 0.0
            next_u = 0
            in_traj = 1
        row = cum_rows[s]
        t = np.searchsorted(row, u[i], side="right")
        if t >= n_states:
            t = n_states - 1
        S += score[s, t]
        s = t
        used = i + 1
        if S > hi:
            if next_u < K and S > u_grid[next_u]:
                w = r_vec[s0] / (r_vec[s] * np.exp(theta * S))
                while next_u < K and S > u_grid[next_u]:
                    w_sum[next_u] += w
                    w2_sum[next_u] += w * w
                    next_u += 1
            hi = S
        if S <= 0.0 or next_u >= K:
            in_traj = 0
            ncompl += 1
            if ncompl >= max_compl:
                break
    return ncompl, used, in_traj, S, hi, s, next_u


@njit(cache=True)
def tail_naive_kernel(
    cum_rows, score, s0, u_grid, u, max_compl,
    in_traj, S, hi, s,
    cnt,
):
    """Plain Monte Carlo: run to ruin, count levels the max exceeded."""
    n_states = cum_rows.shape[0]
    K = u_grid.size
    ncompl = 0
    used = 0
    for i in range(u.size):
        if in_traj == 0:
            s = s0
            S = 0.0
            hi = 0.0
            in_traj = 1
        row = cum_rows[s]
        t = np.searchsorted(row, u[i], side="right")
        if t >= n_states:
            t = n_states - 1
        S += score[s, t]
        s = t
        if S > hi:
            hi = S
        used = i + 1
        if S <= 0.0:
            in_traj = 0
            ncompl += 1
            for k in range(K):
                if hi > u_grid[k]:
                    cnt[k] += 1
            if ncompl >= max_compl:
                break
    return ncompl, used, in_traj, S, hi, s
