"""Compiled per-trial detector loops for Monte Carlo estimation.

These duplicate the reference detectors in detectors.py in numba-compiled
form (single core, so ARL runs at desk scale finish in minutes instead of
hours).  Equivalence against the reference implementations is pinned by
tests/test_kernels.py.

Each runner simulates its own stream (same splitmix64 counter generator as
_rng.py) and returns, for a sorted grid of candidate thresholds, the first
time the running statistic crosses each of them.  A single-threshold run is
the grid of length 1; threshold calibration reuses one pass for the whole
grid (common random numbers across candidates).
"""

from __future__ import annotations

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


@njit(cache=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def _edge_uniform(seed, t, e):
    z = _mix64(np.uint64(seed) ^ _GOLDEN)
    z = _mix64(z ^ np.uint64(t))
    z = _mix64(z ^ (np.uint64(e) + _GOLDEN))
    return np.float64(z >> np.uint64(11)) * 1.1102230246251565e-16  # 2^-53


@njit(cache=True)
def _push_snapshot(seed, t, kappa, p_pre, p_post, ring, cap):
    """Draw snapshot t and append its cumulative counts to the ring."""
    n_edges = p_post.shape[0]
    prev = ring[(t - 1) % cap]
    cur = ring[t % cap]
    for e in range(n_edges):
        p = p_post[e] if t > kappa else p_pre
        x = 1 if _edge_uniform(seed, t, e) < p else 0
        cur[e] = prev[e] + x


@njit(cache=True, inline="always")
def _advance_crossings(stat, t, b_grid, cross_t, ptr):
    while ptr < b_grid.shape[0] and stat >= b_grid[ptr]:
        cross_t[ptr] = t
        ptr += 1
    return ptr


@njit(cache=True)
def run_mixture_known(seed, kappa, p_pre, p_post, alpha, c0, c1,
                      m0, m1, b_grid, max_t, h_table):
    """Mixture rule with known p1.  h_table[tau, n] = h((c0-c1)n + tau*c1)."""
    n_edges = p_post.shape[0]
    cap = m1 + 1
    ring = np.zeros((cap, n_edges), dtype=np.int64)
    cross_t = np.zeros(b_grid.shape[0], dtype=np.int64)
    ptr = 0
    for t in range(1, max_t + 1):
        _push_snapshot(seed, t, kappa, p_pre, p_post, ring, cap)
        cur = ring[t % cap]
        k_lo = t - m1 if t - m1 > 0 else 0
        best = -np.inf
        for k in range(t - m0, k_lo - 1, -1):
            tau = t - k
            row = ring[k % cap]
            s = 0.0
            for e in range(n_edges):
                s += h_table[tau, cur[e] - row[e]]
            if s > best:
                best = s
        ptr = _advance_crossings(best, t, b_grid, cross_t, ptr)
        if ptr == b_grid.shape[0]:
            break
    return cross_t


@njit(cache=True)
def run_mixture_unknown(seed, kappa, p_pre, p_post, alpha,
                        m0, m1, b_grid, max_t, ch0_table, ch1_table):
    """Mixture rule with the global plug-in MLE for p1 (full edge set).

    ch0_table[tau, total] / ch1_table[tau, total] hold the plug-in log
    ratios for the clamped MLE at window total count ``total``; a zero
    ch0 marks the lower clamp (statistic identically 0 for that k).
    Within a k the edges are grouped by their window count so the
    transcendental h is evaluated once per distinct count.
    """
    n_edges = p_post.shape[0]
    cap = m1 + 1
    ring = np.zeros((cap, n_edges), dtype=np.int64)
    cross_t = np.zeros(b_grid.shape[0], dtype=np.int64)
    ptr = 0
    log_alpha = np.log(alpha)
    nval = np.empty(n_edges, dtype=np.int64)
    ncnt = np.empty(n_edges, dtype=np.int64)
    for t in range(1, max_t + 1):
        _push_snapshot(seed, t, kappa, p_pre, p_post, ring, cap)
        cur = ring[t % cap]
        k_lo = t - m1 if t - m1 > 0 else 0
        best = -np.inf
        for k in range(t - m0, k_lo - 1, -1):
            tau = t - k
            s = 0.0
            if tau > 0:
                row = ring[k % cap]
                total = 0
                nd = 0
                for e in range(n_edges):
                    n = cur[e] - row[e]
                    total += n
                    found = False
                    for d in range(nd):
                        if nval[d] == n:
                            ncnt[d] += 1
                            found = True
                            break
                    if not found:
                        nval[nd] = n
                        ncnt[nd] = 1
                        nd += 1
                ch0 = ch0_table[tau, total]
                if ch0 > 0.0:
                    ch1 = ch1_table[tau, total]
                    for d in range(nd):
                        u = (ch0 - ch1) * nval[d] + tau * ch1
                        if u < 30.0:
                            s += ncnt[d] * np.log1p(alpha * np.expm1(u))
                        else:
                            s += ncnt[d] * (u + log_alpha + np.log1p(
                                (1.0 - alpha) * np.exp(-u) / alpha))
            if s > best:
                best = s
        ptr = _advance_crossings(best, t, b_grid, cross_t, ptr)
        if ptr == b_grid.shape[0]:
            break
    return cross_t


@njit(cache=True)
def run_es_known(seed, kappa, p_pre, p_post, c0, c1, sub_pairs,
                 m0, m1, b_grid, max_t):
    """Windowed exhaustive search with known p1.

    sub_pairs[si] lists the canonical edge indices of subset si's clique.
    A second ring of per-subset cumulative counts makes each (k, S) O(1).
    """
    n_edges = p_post.shape[0]
    n_sub, n_pairs = sub_pairs.shape
    cap = m1 + 1
    ring = np.zeros((cap, n_edges), dtype=np.int64)
    sub_ring = np.zeros((cap, n_sub), dtype=np.int64)
    cross_t = np.zeros(b_grid.shape[0], dtype=np.int64)
    ptr = 0
    cc = c0 - c1
    for t in range(1, max_t + 1):
        _push_snapshot(seed, t, kappa, p_pre, p_post, ring, cap)
        cur = ring[t % cap]
        prev = ring[(t - 1) % cap]
        sub_prev = sub_ring[(t - 1) % cap]
        sub_cur = sub_ring[t % cap]
        for si in range(n_sub):
            inc = 0
            for pi in range(n_pairs):
                e = sub_pairs[si, pi]
                inc += cur[e] - prev[e]
            sub_cur[si] = sub_prev[si] + inc
        k_lo = t - m1 if t - m1 > 0 else 0
        best = -np.inf
        for k in range(t - m0, k_lo - 1, -1):
            tau = t - k
            row = sub_ring[k % cap]
            base = n_pairs * tau * c1
            for si in range(n_sub):
                stat = cc * (sub_cur[si] - row[si]) + base
                if stat > best:
                    best = stat
        ptr = _advance_crossings(best, t, b_grid, cross_t, ptr)
        if ptr == b_grid.shape[0]:
            break
    return cross_t


@njit(cache=True)
def run_hmix_known(seed, kappa, p_pre, p_post, alpha, c0, c1, n_nodes, s,
                   pair_index, m0, m1, b_grid, max_t, h_table):
    """Hierarchical mixture with known p1.

    pair_index[i, j] is the canonical edge index of (i, j).  The greedy
    chain is run via node row-sums: removing the node whose exclusion
    maximizes M is removing the node with the smallest row-sum.
    """
    n_edges = p_post.shape[0]
    cap = m1 + 1
    ring = np.zeros((cap, n_edges), dtype=np.int64)
    cross_t = np.zeros(b_grid.shape[0], dtype=np.int64)
    ptr = 0
    h_edge = np.empty(n_edges)
    rowsum = np.empty(n_nodes)
    alive = np.empty(n_nodes, dtype=np.bool_)
    for t in range(1, max_t + 1):
        _push_snapshot(seed, t, kappa, p_pre, p_post, ring, cap)
        cur = ring[t % cap]
        k_lo = t - m1 if t - m1 > 0 else 0
        best = -np.inf
        for k in range(t - m0, k_lo - 1, -1):
            tau = t - k
            row = ring[k % cap]
            for e in range(n_edges):
                h_edge[e] = h_table[tau, cur[e] - row[e]]
            m_full = 0.0
            for i in range(n_nodes):
                rowsum[i] = 0.0
                alive[i] = True
            for j in range(n_nodes):
                for i in range(j):
                    h = h_edge[pair_index[i, j]]
                    rowsum[i] += h
                    rowsum[j] += h
                    m_full += h
            n_alive = n_nodes
            while n_alive > s:
                # argmax_i M(S \ {i}) = argmin_i rowsum[i]; ties -> smallest i
                best_i = -1
                best_rs = np.inf
                for i in range(n_nodes):
                    if alive[i] and rowsum[i] < best_rs:
                        best_rs = rowsum[i]
                        best_i = i
                alive[best_i] = False
                n_alive -= 1
                m_full -= best_rs
                for j in range(n_nodes):
                    if alive[j]:
                        e = pair_index[j, best_i] if j < best_i else pair_index[best_i, j]
                        rowsum[j] -= h_edge[e]
            if m_full > best:
                best = m_full
        ptr = _advance_crossings(best, t, b_grid, cross_t, ptr)
        if ptr == b_grid.shape[0]:
            break
    return cross_t
