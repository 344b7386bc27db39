"""Compiled Gillespie kernel.

Everything here is 0-based: site ``i`` of the model is index ``i - 1``.
Moves are (src, dst) index pairs with ``-1`` standing for the reservoir, so
Inject is (-1, 0) and Extract is (L-1, -1).

Ordinary rate-1 hops live in an indexed set (``act`` / ``pos``) so that
picking one uniformly and updating membership are O(1).  The handful of
rule-table moves (boundaries and shortcut junctions) are recomputed only
when an event touches a site those rules read.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

PLAIN, BASIC1, BASIC2, ADVANCED1, ADVANCED2 = 0, 1, 2, 3, 4
MAX_SPECIAL = 16


@njit(cache=True)
def _fork(occ, k1, k2, q, p, retain_hop, src, dst, rate, n):
    # k1, k2 are 1-based anchors; occ index = site - 1
    a = k1 - 1
    m = k2 - 2
    if occ[a] == 1:
        e1 = occ[a + 1] == 0
        e2 = occ[k2 - 1] == 0
        w = 1.0 if occ[m] == 0 else p
        r = 0.0
        if e1 and e2:
            r = 1.0 - q * w if retain_hop else 1.0 - q
        elif e1:
            r = 1.0
        if r > 0.0:
            src[n] = a
            dst[n] = a + 1
            rate[n] = r
            n += 1
        if e2 and q * w > 0.0:
            src[n] = a
            dst[n] = k2 - 1
            rate[n] = q * w
            n += 1
    if occ[m] == 1 and occ[m + 1] == 0:
        r = 1.0 if occ[a] == 0 else 1.0 - p * q
        if r > 0.0:
            src[n] = m
            dst[n] = m + 1
            rate[n] = r
            n += 1
    return n


@njit(cache=True)
def _double_fork(occ, k1, k2, k3, q1, q2, p1, p2, src, dst, rate, n):
    a = k1 - 1
    if occ[a] == 1:
        e1 = occ[a + 1] == 0
        e2 = occ[k2 - 1] == 0
        e3 = occ[k3 - 1] == 0
        w1 = 1.0 if occ[k2 - 2] == 0 else p1
        w2 = 1.0 if occ[k3 - 2] == 0 else p2
        if e1:
            r = 1.0
            if e2:
                r -= q1
            if e3:
                r -= q2
            if r > 0.0:
                src[n] = a
                dst[n] = a + 1
                rate[n] = r
                n += 1
        if e2 and q1 * w1 > 0.0:
            src[n] = a
            dst[n] = k2 - 1
            rate[n] = q1 * w1
            n += 1
        if e3 and q2 * w2 > 0.0:
            src[n] = a
            dst[n] = k3 - 1
            rate[n] = q2 * w2
            n += 1
    for j in range(2):
        m = k2 - 2 if j == 0 else k3 - 2
        pq = p1 * q1 if j == 0 else p2 * q2
        if occ[m] == 1 and occ[m + 1] == 0:
            r = 1.0 if occ[a] == 0 else 1.0 - pq
            if r > 0.0:
                src[n] = m
                dst[n] = m + 1
                rate[n] = r
                n += 1
    return n


@njit(cache=True)
def special_moves(variant, L, k, q, p, alpha, beta, occ, src, dst, rate):
    """Fill (src, dst, rate) with the rule-table moves of ``occ``; return the count."""
    n = 0
    if occ[0] == 0 and alpha > 0.0:
        src[n] = -1
        dst[n] = 0
        rate[n] = alpha
        n += 1
    if variant == BASIC1 or variant == BASIC2:
        n = _fork(occ, k[0], k[1], q[0], p[0], variant == BASIC2, src, dst, rate, n)
    elif variant == ADVANCED1:
        n = _fork(occ, k[0], k[1], q[0], p[0], False, src, dst, rate, n)
        n = _fork(occ, k[2], k[3], q[1], p[1], False, src, dst, rate, n)
    elif variant == ADVANCED2:
        n = _double_fork(occ, k[0], k[1], k[2], q[0], q[1], p[0], p[1], src, dst, rate, n)
    if occ[L - 1] == 1 and beta > 0.0:
        src[n] = L - 1
        dst[n] = -1
        rate[n] = beta
        n += 1
    return n


@njit(cache=True)
def _refresh_bond(i, occ, ordinary, act, pos, n_act):
    """Sync membership of ordinary bond i -> i+1 with the current occupancy."""
    want = ordinary[i] and occ[i] == 1 and occ[i + 1] == 0
    if want and pos[i] < 0:
        act[n_act] = i
        pos[i] = n_act
        n_act += 1
    elif not want and pos[i] >= 0:
        n_act -= 1
        last = act[n_act]
        act[pos[i]] = last
        pos[last] = pos[i]
        pos[i] = -1
    return n_act


@njit(cache=True)
def simulate(variant, L, k, q, p, alpha, beta, ordinary, watch, sc_src, sc_dst,
             occ, rng, t_burn, t_meas, n_batches, max_events,
             dens_acc, n_in, n_out, bond_cnt, sc_cnt,
             trace_src, trace_dst, trace_total):
    """Run the chain in place on ``occ``.

    Measurement accumulators are indexed by batch; batch b covers
    [t_burn + b*T_b, t_burn + (b+1)*T_b) with T_b = t_meas / n_batches.
    The first ``len(trace_src)`` events are recorded together with the total
    exit rate of the state they left.  Returns (events, injections - extractions
    over the whole trajectory, end time).
    """
    n_trace = trace_src.shape[0]
    act = np.empty(L, np.int64)
    pos = -np.ones(L, np.int64)
    n_act = 0
    for i in range(L - 1):
        n_act = _refresh_bond(i, occ, ordinary, act, pos, n_act)

    s_src = np.empty(MAX_SPECIAL, np.int64)
    s_dst = np.empty(MAX_SPECIAL, np.int64)
    s_rate = np.empty(MAX_SPECIAL, np.float64)
    n_sp = special_moves(variant, L, k, q, p, alpha, beta, occ, s_src, s_dst, s_rate)
    sp_total = 0.0
    for j in range(n_sp):
        sp_total += s_rate[j]

    t_batch = t_meas / n_batches
    last = np.zeros(L)
    t = 0.0
    b = -1
    next_edge = t_burn
    events = 0
    net = 0
    n_sc = sc_src.shape[0]

    while True:
        total = n_act + sp_total
        if total > 0.0:
            t_next = t + rng.standard_exponential() / total
        else:
            t_next = np.inf
        # close every batch boundary passed during this dwell
        done = False
        while t_next >= next_edge:
            if b >= 0:
                for i in range(L):
                    if occ[i] == 1:
                        dens_acc[b, i] += next_edge - last[i]
            for i in range(L):
                last[i] = next_edge
            b += 1
            if b == n_batches:
                done = True
                break
            next_edge = t_burn + (b + 1) * t_batch
        if done or (max_events >= 0 and events >= max_events):
            break
        t = t_next

        u = rng.random() * total
        if u < n_act:
            i = act[int(u)]
            a = i
            c = i + 1
        else:
            u -= n_act
            j = 0
            while j < n_sp - 1 and u >= s_rate[j]:
                u -= s_rate[j]
                j += 1
            a = s_src[j]
            c = s_dst[j]

        if events < n_trace:
            trace_src[events] = a
            trace_dst[events] = c
            trace_total[events] = total
        events += 1

        if a >= 0:
            if b >= 0:
                dens_acc[b, a] += t - last[a]
            last[a] = t
            occ[a] = 0
        if c >= 0:
            last[c] = t
            occ[c] = 1

        if a < 0:
            net += 1
            if b >= 0:
                n_in[b] += 1
        elif c < 0:
            net -= 1
            if b >= 0:
                n_out[b] += 1
        elif c == a + 1:
            if b >= 0:
                bond_cnt[b, a] += 1
        elif b >= 0:
            for s in range(n_sc):
                if sc_src[s] == a and sc_dst[s] == c:
                    sc_cnt[b, s] += 1

        # written out instead of calling _refresh_bond: array arguments to a
        # helper cost refcount traffic on every event
        for x in (a - 1, a, c - 1, c):
            if 0 <= x <= L - 2:
                want = ordinary[x] and occ[x] == 1 and occ[x + 1] == 0
                if want and pos[x] < 0:
                    act[n_act] = x
                    pos[x] = n_act
                    n_act += 1
                elif not want and pos[x] >= 0:
                    n_act -= 1
                    moved = act[n_act]
                    act[pos[x]] = moved
                    pos[moved] = pos[x]
                    pos[x] = -1

        if (a >= 0 and watch[a]) or (c >= 0 and watch[c]):
            n_sp = special_moves(variant, L, k, q, p, alpha, beta, occ, s_src, s_dst, s_rate)
            sp_total = 0.0
            for j in range(n_sp):
                sp_total += s_rate[j]

    return events, net, t
