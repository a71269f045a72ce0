"""Compiled kinetic Monte Carlo engine for production-scale trajectories.

Same stochastic process as the reference engine, reorganized for speed. The
collision channels are never enumerated individually: channels factorize into
an incoming pair and an outgoing pair drawn from the same energy block, so
per-block sums of pair weights give an upper envelope on the total collision
rate. Proposals drawn from that envelope are accepted with the exact ratio of
the true channel rate to its envelope weight (rejections advance the clock as
null events, which keeps the waiting-time statistics exact). Pair weights are
maintained incrementally; a full recomputation every refresh_every proposals
bounds floating-point drift.
"""

import math

import numpy as np
from numba import njit

from .engine import Trajectory
from .rng import xoshiro_state
from .units import shell_degeneracy, states_up_to

_TABLES = {}


def _pair_tables(S):
    """Unordered shell pairs grouped by index sum, plus shell adjacency."""
    if S in _TABLES:
        return _TABLES[S]
    pairs = []
    n_blocks = 2 * S - 1
    block_start = np.zeros(n_blocks, dtype=np.int64)
    block_len = np.zeros(n_blocks, dtype=np.int64)
    pair_of = np.zeros((S, S), dtype=np.int64)
    for total in range(n_blocks):
        block_start[total] = len(pairs)
        for m1 in range(max(0, total - (S - 1)), total // 2 + 1):
            m2 = total - m1
            pair_of[m1, m2] = len(pairs)
            pair_of[m2, m1] = len(pairs)
            pairs.append((m1, m2))
        block_len[total] = len(pairs) - block_start[total]
    pair_m1 = np.array([p[0] for p in pairs], dtype=np.int64)
    pair_m2 = np.array([p[1] for p in pairs], dtype=np.int64)
    pair_block = pair_m1 + pair_m2
    g_i = np.array([shell_degeneracy(m) for m in range(S)], dtype=np.int64)
    g_f = g_i.astype(np.float64)
    tables = (pair_m1, pair_m2, pair_block, block_start, block_len, pair_of,
              g_i, g_f)
    _TABLES[S] = tables
    return tables


@njit(cache=True)
def _next_u64(s):
    result = s[0] + s[3]
    t = s[1] << np.uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = (s[3] << np.uint64(45)) | (s[3] >> np.uint64(19))
    return result


@njit(cache=True)
def _next_double(s):
    return np.float64(_next_u64(s) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def _pair_wb(counts, g_i, g_f, m1, m2):
    """Envelope in-weight and out-weight of one unordered shell pair.

    w = (m1+1)(m1+2) N1 (N2 - d12) / (g1 g2) dominates every channel that
    consumes the pair because min(m1, m3) <= m1; b = (N1+g1)(N2+g2+d12) /
    (g1 g2) is the bosonic enhancement of producing it.
    """
    n1 = counts[m1]
    n2 = counts[m2] - (1 if m2 == m1 else 0)
    if n1 > 0 and n2 > 0:
        w = (m1 + 1) * (m1 + 2) * (np.float64(n1) * np.float64(n2)) / (g_f[m1] * g_f[m2])
    else:
        w = 0.0
    b3 = counts[m1] + g_i[m1]
    b4 = counts[m2] + g_i[m2] + (1 if m2 == m1 else 0)
    b = (np.float64(b3) * np.float64(b4)) / (g_f[m1] * g_f[m2])
    return w, b


@njit(cache=True)
def _refresh_all(counts, g_i, g_f, pair_m1, pair_m2, block_start, block_len,
                 W, Bv, SA, SB, D, delta):
    """Exact per-block sums; the block envelope excludes the diagonal
    (in-pair == out-pair) products, which correspond to identity channels and
    would otherwise dominate once one pair is macroscopically occupied."""
    total = 0.0
    for T in range(SA.size):
        sa = 0.0
        sb = 0.0
        dd = 0.0
        for p in range(block_start[T], block_start[T] + block_len[T]):
            w, b = _pair_wb(counts, g_i, g_f, pair_m1[p], pair_m2[p])
            W[p] = w
            Bv[p] = b
            sa += w
            sb += b
            dd += w * b
        SA[T] = sa
        SB[T] = sb
        D[T] = dd
        total += delta * (sa * sb - dd)
    return total


@njit(cache=True)
def _touch(m, pair_of, stamp, seq, counts, g_i, g_f, pair_m1, pair_m2,
           pair_block, W, Bv, SA, SB, D, delta, rc):
    """Recompute the weights of every pair containing shell m; returns rc."""
    S = pair_of.shape[0]
    for x in range(S):
        p = pair_of[m, x]
        if stamp[p] == seq:
            continue
        stamp[p] = seq
        T = pair_block[p]
        rc -= delta * (SA[T] * SB[T] - D[T])
        w, b = _pair_wb(counts, g_i, g_f, pair_m1[p], pair_m2[p])
        SA[T] += w - W[p]
        SB[T] += b - Bv[p]
        D[T] += w * b - W[p] * Bv[p]
        W[p] = w
        Bv[p] = b
        rc += delta * (SA[T] * SB[T] - D[T])
    return rc


@njit(cache=True)
def _pick_block(SA, SB, D, delta, target):
    last = -1
    acc = 0.0
    for T in range(SA.size):
        br = delta * (SA[T] * SB[T] - D[T])
        if br > 0.0:
            last = T
            acc += br
            if target < acc:
                return T
    return last


@njit(cache=True)
def _pick_in_pair(W, Bv, sb_total, block_start, block_len, T, target):
    """In-pair from the off-diagonal joint weight W[p] * (SB - B[p])."""
    lo = block_start[T]
    hi = lo + block_len[T]
    last = -1
    acc = 0.0
    for p in range(lo, hi):
        if W[p] > 0.0:
            w = W[p] * (sb_total - Bv[p])
            if w > 0.0:
                last = p
                acc += w
                if target < acc:
                    return p
    return last


@njit(cache=True)
def _pick_out_pair(Bv, block_start, block_len, T, skip, target):
    """Out-pair proportional to B, excluding the incoming pair."""
    lo = block_start[T]
    hi = lo + block_len[T]
    last = -1
    acc = 0.0
    for p in range(lo, hi):
        if p == skip:
            continue
        b = Bv[p]
        if b > 0.0:
            last = p
            acc += b
            if target < acc:
                return p
    return last


@njit(cache=True)
def _kernel(counts, g_i, g_f, m_max, evap_on,
            pair_m1, pair_m2, pair_block, block_start, block_len, pair_of,
            stamp, W, Bv, SA, SB, D,
            delta, gamma_eff, load_mode, load_top, load_base,
            out_variant, const_rate, c_coeff, f_max, resample_interval,
            start_time, t_end, grid, max_events, refresh_every, validate_every,
            avg_on, avg_start, avg_counts,
            s, out, scal_i, scal_f, loaded0, evap0):
    S = counts.size
    n_grid = grid.size

    N = np.int64(0)
    U = np.int64(0)
    NL = np.int64(0)
    for m in range(S):
        N += counts[m]
        U += m * counts[m]
        if m <= load_top:
            NL += counts[m]

    rc = _refresh_all(counts, g_i, g_f, pair_m1, pair_m2, block_start,
                      block_len, W, Bv, SA, SB, D, delta)

    loaded = loaded0
    evap = evap0
    outc = np.int64(0)
    ntr = np.int64(0)
    events = np.int64(0)
    n_coll = np.int64(0)
    n_load = np.int64(0)
    n_outc = np.int64(0)
    n_prop = np.int64(0)
    n_rej = np.int64(0)
    n_resample = np.int64(0)
    seq = np.int64(0)
    iters = np.int64(0)
    last_validated = np.int64(-1)
    avg_dur = 0.0

    sh = np.empty(4, dtype=np.int64)
    dl = np.empty(4, dtype=np.int64)

    t = 0.0
    gi = 0
    out_started = out_variant == 0
    pending_start = math.inf if out_started else start_time
    next_resample = math.inf
    out_rate_cur = 0.0
    status = 0

    while True:
        while gi < n_grid and grid[gi] <= t:
            out[gi, 0] = N
            out[gi, 1] = counts[0]
            out[gi, 2] = U
            out[gi, 3] = loaded
            out[gi, 4] = evap
            out[gi, 5] = outc
            out[gi, 6] = ntr
            out[gi, 7] = events
            gi += 1
        if (not out_started) and t >= pending_start:
            out_started = True
            pending_start = math.inf
            if out_variant == 2:
                f = _next_double(s) * f_max
                n_resample += 1
                next_resample = start_time + resample_interval
                out_rate_cur = (c_coeff - f) * gamma_eff
            else:
                out_rate_cur = const_rate
        while out_variant == 2 and t >= next_resample:
            f = _next_double(s) * f_max
            n_resample += 1
            next_resample += resample_interval
            out_rate_cur = (c_coeff - f) * gamma_eff
        if t >= t_end and gi >= n_grid:
            break
        if events >= max_events:
            while gi < n_grid:
                out[gi, 0] = N
                out[gi, 1] = counts[0]
                out[gi, 2] = U
                out[gi, 3] = loaded
                out[gi, 4] = evap
                out[gi, 5] = outc
                out[gi, 6] = ntr
                out[gi, 7] = events
                gi += 1
            status = 1
            break

        horizon = t_end
        if gi < n_grid and grid[gi] < horizon:
            horizon = grid[gi]
        if pending_start < horizon:
            horizon = pending_start
        if next_resample < horizon:
            horizon = next_resample

        iters += 1
        if iters % refresh_every == 0:
            rc = _refresh_all(counts, g_i, g_f, pair_m1, pair_m2, block_start,
                              block_len, W, Bv, SA, SB, D, delta)

        r_out = 0.0
        if out_started and counts[0] > 0:
            r_out = out_rate_cur * counts[0]
        r_load = 0.0
        if gamma_eff > 0.0:
            if load_mode >= 2:
                # fixed total delivery rate, landing distribution applied below
                r_load = gamma_eff
            else:
                r_load = gamma_eff * (np.float64(NL) + load_base)
        R = rc + r_load + r_out

        if R <= 0.0:
            if avg_on and horizon > t:
                lo = t if t > avg_start else avg_start
                ww = horizon - lo
                if ww > 0.0:
                    for m in range(S):
                        avg_counts[m] += counts[m] * ww
                    avg_dur += ww
            t = horizon
            continue

        u = _next_double(s)
        dt = -math.log(1.0 - u) / R
        if t + dt >= horizon:
            if avg_on and horizon > t:
                lo = t if t > avg_start else avg_start
                ww = horizon - lo
                if ww > 0.0:
                    for m in range(S):
                        avg_counts[m] += counts[m] * ww
                    avg_dur += ww
            t = horizon
            continue

        if avg_on and dt > 0.0:
            lo = t if t > avg_start else avg_start
            ww = t + dt - lo
            if ww > 0.0:
                for m in range(S):
                    avg_counts[m] += counts[m] * ww
                avg_dur += ww

        u2 = _next_double(s) * R
        if u2 < rc:
            # collision proposal from the factorized envelope
            n_prop += 1
            T = _pick_block(SA, SB, D, delta, u2)
            accepted = False
            m1 = 0
            m2 = 0
            m3 = 0
            m4 = 0
            if T >= 0:
                sb_total = SB[T]
                pin = _pick_in_pair(W, Bv, sb_total, block_start, block_len,
                                    T, _next_double(s) * (SA[T] * sb_total - D[T]))
                pout = -1
                if pin >= 0:
                    pout = _pick_out_pair(Bv, block_start, block_len, T, pin,
                                          _next_double(s) * (sb_total - Bv[pin]))
                if pin >= 0 and pout >= 0:
                    m1 = pair_m1[pin]
                    m2 = pair_m2[pin]
                    m3 = pair_m1[pout]
                    m4 = pair_m2[pout]
                    env = (m1 + 1) * (m1 + 2)
                    mj = m1 if m1 < m3 else m3
                    thr = (mj + 1) * (mj + 2)
                    if thr >= env:
                        accepted = True
                    elif _next_double(s) * env < thr:
                        accepted = True
            if accepted:
                nch = 0
                for k4 in range(4):
                    if k4 == 0:
                        mm = m1
                        dd = np.int64(-1)
                    elif k4 == 1:
                        mm = m2
                        dd = np.int64(-1)
                    elif k4 == 2:
                        mm = m3
                        dd = np.int64(1)
                    else:
                        mm = m4
                        dd = np.int64(1)
                    found = -1
                    for k in range(nch):
                        if sh[k] == mm:
                            found = k
                            break
                    if found >= 0:
                        dl[found] += dd
                    else:
                        sh[nch] = mm
                        dl[nch] = dd
                        nch += 1
                if evap_on:
                    for k4 in range(2):
                        mm = m3 if k4 == 0 else m4
                        if mm > m_max:
                            for k in range(nch):
                                if sh[k] == mm:
                                    dl[k] -= 1
                                    break
                            evap += 1
                            N -= 1
                            U -= mm
                # apply all net count changes, then refresh touched pairs
                for k in range(nch):
                    d = dl[k]
                    if d != 0:
                        mm = sh[k]
                        counts[mm] += d
                        if mm <= load_top:
                            NL += d
                seq += 1
                for k in range(nch):
                    if dl[k] != 0:
                        rc = _touch(sh[k], pair_of, stamp, seq, counts, g_i,
                                    g_f, pair_m1, pair_m2, pair_block, W, Bv,
                                    SA, SB, D, delta, rc)
                n_coll += 1
                events += 1
            else:
                n_rej += 1
        elif u2 < rc + r_load:
            msel = load_top
            if load_mode == 2:
                k = np.int64((u2 - rc) / r_load * np.float64(load_top + 1))
                if k < load_top:
                    msel = k
            else:
                if load_mode == 3:
                    # rescale onto the bosonic landing weights (sum NL + top + 1)
                    target = (u2 - rc) / r_load * (np.float64(NL) + load_base)
                else:
                    target = (u2 - rc) / gamma_eff
                acc = 0.0
                for m in range(load_top + 1):
                    if load_mode == 1:
                        wm = np.float64(counts[m] + g_i[m])
                    else:
                        wm = np.float64(counts[m] + 1)
                    acc += wm
                    if target < acc:
                        msel = m
                        break
            loaded += 1
            n_load += 1
            events += 1
            if evap_on and msel > m_max:
                # arrives above the trap cutoff and leaves immediately
                ntr += 1
            else:
                counts[msel] += 1
                N += 1
                U += msel
                if msel <= load_top:
                    NL += 1
                seq += 1
                rc = _touch(msel, pair_of, stamp, seq, counts, g_i, g_f,
                            pair_m1, pair_m2, pair_block, W, Bv, SA, SB, D,
                            delta, rc)
        else:
            counts[0] -= 1
            N -= 1
            NL -= 1
            outc += 1
            n_outc += 1
            events += 1
            seq += 1
            rc = _touch(0, pair_of, stamp, seq, counts, g_i, g_f, pair_m1,
                        pair_m2, pair_block, W, Bv, SA, SB, D, delta, rc)

        t = t + dt

        if (validate_every > 0 and events > 0 and events != last_validated
                and events % validate_every == 0):
            last_validated = events
            n_check = np.int64(0)
            u_check = np.int64(0)
            nl_check = np.int64(0)
            for m in range(S):
                if counts[m] < 0:
                    status = 2
                    break
                n_check += counts[m]
                u_check += m * counts[m]
                if m <= load_top:
                    nl_check += counts[m]
            if status == 2 or n_check != N or u_check != U or nl_check != NL:
                status = 2
                break
            rc_exact = _refresh_all(counts, g_i, g_f, pair_m1, pair_m2,
                                    block_start, block_len, W, Bv, SA, SB,
                                    D, delta)
            scale = rc_exact if rc_exact > 1.0 else 1.0
            if abs(rc_exact - rc) > 1e-6 * scale:
                status = 2
                break
            rc = rc_exact

    scal_i[0] = gi
    scal_i[1] = events
    scal_i[2] = n_coll
    scal_i[3] = n_load
    scal_i[4] = n_outc
    scal_i[5] = n_prop
    scal_i[6] = n_rej
    scal_i[7] = n_resample
    scal_i[8] = loaded
    scal_i[9] = evap
    scal_i[10] = outc
    scal_i[11] = ntr
    scal_i[12] = N
    scal_i[13] = U
    scal_f[0] = t
    scal_f[1] = avg_dur
    return status


def run_trajectory(params, replica, resolved):
    """One compiled-engine trajectory; same schema as the reference engine."""
    S = resolved["S"]
    m_max = resolved["m_max"]
    counts = resolved["counts"].copy()
    spill = 0
    if params.evaporation:
        for m in range(m_max + 1, S):
            spill += int(counts[m])
            counts[m] = 0
    initial_atoms = int(counts.sum()) + spill

    (pair_m1, pair_m2, pair_block, block_start, block_len, pair_of,
     g_i, g_f) = _pair_tables(S)
    P = pair_m1.size
    n_blocks = block_start.size
    W = np.zeros(P, dtype=np.float64)
    Bv = np.zeros(P, dtype=np.float64)
    SA = np.zeros(n_blocks, dtype=np.float64)
    SB = np.zeros(n_blocks, dtype=np.float64)
    D = np.zeros(n_blocks, dtype=np.float64)
    stamp = np.full(P, -1, dtype=np.int64)

    loading = params.loading
    load_top = S - 1 if loading.max_load_shell is None else min(
        loading.max_load_shell, S - 1)
    load_mode = {"per-shell": 0, "per-state-ergodic": 1, "uniform": 2,
                 "stimulated": 3}[loading.mode]
    if load_mode == 1:
        load_base = float(states_up_to(load_top))
    else:
        load_base = float(load_top + 1)

    policy = params.outcoupling
    variant = {"off": 0, "constant": 1, "randomized": 2}[policy.variant]
    const_rate = policy.per_atom_rate(loading.gamma_eff) if variant == 1 else 0.0

    avg_start = resolved["avg_start"]
    avg_on = avg_start is not None
    avg_counts = np.zeros(S, dtype=np.float64)

    grid = resolved["grid"]
    out = np.zeros((grid.size, 8), dtype=np.int64)
    scal_i = np.zeros(16, dtype=np.int64)
    scal_f = np.zeros(4, dtype=np.float64)
    s = xoshiro_state(params.seed, replica)

    status = _kernel(
        counts, g_i, g_f, m_max, params.evaporation,
        pair_m1, pair_m2, pair_block, block_start, block_len, pair_of,
        stamp, W, Bv, SA, SB, D,
        resolved["delta"], loading.gamma_eff, load_mode, load_top, load_base,
        variant, const_rate, policy.c, policy.f_max, policy.resample_interval,
        policy.start_time, params.t_end, grid, resolved["max_events"],
        params.refresh_every, params.validate_every,
        avg_on, avg_start if avg_on else 0.0, avg_counts,
        s, out, scal_i, scal_f, np.int64(0), np.int64(spill))
    if status == 2:
        raise AssertionError("compiled engine cache validation failed")

    n_total = out[:, 0].copy()
    n0 = out[:, 1].copy()
    weighted = out[:, 2]
    with np.errstate(invalid="ignore", divide="ignore"):
        fraction = np.where(n_total > 0, n0 / np.maximum(n_total, 1), 0.0)
        energy = np.where(n_total > 0,
                          (weighted + 1.5 * n_total) / np.maximum(n_total, 1),
                          0.0)
    avg_occ = None
    avg_duration = 0.0
    if avg_on and scal_f[1] > 0.0:
        avg_occ = avg_counts / scal_f[1]
        avg_duration = float(scal_f[1])
    event_counts = {
        "collision": int(scal_i[2]),
        "load": int(scal_i[3]),
        "outcouple": int(scal_i[4]),
        "resample": int(scal_i[7]),
        "proposals": int(scal_i[5]),
        "rejected": int(scal_i[6]),
    }
    return Trajectory(
        times=grid.copy(),
        n_total=n_total,
        n0=n0,
        fraction=fraction.astype(np.float64),
        energy_per_particle=energy.astype(np.float64),
        cum_loaded=out[:, 3].copy(),
        cum_evaporated=out[:, 4].copy(),
        cum_outcoupled=out[:, 5].copy(),
        cum_not_trapped=out[:, 6].copy(),
        events_total=out[:, 7].copy(),
        final_counts=counts.copy(),
        event_counts=event_counts,
        initial_atoms=initial_atoms,
        replica=replica,
        avg_occupancy=avg_occ,
        avg_duration=avg_duration,
    )
