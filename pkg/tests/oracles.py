"""Slow, independent re-implementations used as ground truth by the tests.

Everything here works directly from raw snapshot lists with no ring buffers,
no vectorization and no recursions, so agreement with the library is
evidence rather than tautology.
"""

import math
from itertools import combinations

import numpy as np

from commwatch.graphs import ScenarioSpec, sample_snapshot


def random_stream(n_nodes, p0, seed, length):
    spec = ScenarioSpec.null(n_nodes, p0)
    return [sample_snapshot(spec, t, seed) for t in range(1, length + 1)]


def pair_count(snapshots, i, j, k, t):
    """Fires of edge (i, j) in snapshots k+1..t (1-based times)."""
    return sum(1 for m in range(k + 1, t + 1) if snapshots[m - 1].has_edge(i, j))


def subset_llr(snapshots, nodes, k, t, p0, p1):
    c0 = math.log(p1 / p0)
    c1 = math.log((1 - p1) / (1 - p0))
    val = 0.0
    for i, j in combinations(sorted(nodes), 2):
        n = pair_count(snapshots, i, j, k, t)
        val += (c0 - c1) * n + (t - k) * c1
    return val


def subset_llr_mle(snapshots, nodes, k, t, p0, clamp_eps=1e-6):
    """Plug-in LLR with the subset MLE, clamped to [p0, 1 - clamp_eps]."""
    pairs = list(combinations(sorted(nodes), 2))
    tau = t - k
    fires = sum(pair_count(snapshots, i, j, k, t) for i, j in pairs)
    p_hat = min(max(fires / (len(pairs) * tau), p0), 1.0 - clamp_eps)
    if p_hat <= p0:
        return 0.0
    return subset_llr(snapshots, nodes, k, t, p0, p_hat)


def es_statistic(snapshots, t, p0, p1, s, m0, m1):
    """max over windowed k and size-s subsets of the (plug-in) LLR."""
    n_nodes = snapshots[0].n_nodes
    best = -math.inf
    for k in range(max(0, t - m1), t - m0 + 1):
        for nodes in combinations(range(n_nodes), s):
            if p1 is None:
                val = 0.0 if k == t else subset_llr_mle(snapshots, nodes, k, t, p0)
            else:
                val = subset_llr(snapshots, nodes, k, t, p0, p1)
            if val > best:
                best = val
    return best


def mixture_statistic_of_subset(snapshots, nodes, k, t, p0, p1, alpha):
    c0 = math.log(p1 / p0)
    c1 = math.log((1 - p1) / (1 - p0))
    val = 0.0
    for i, j in combinations(sorted(nodes), 2):
        u = (c0 - c1) * pair_count(snapshots, i, j, k, t) + (t - k) * c1
        val += math.log(1 - alpha + alpha * math.exp(u))
    return val


def best_subset_mixture(snapshots, s, k, t, p0, p1, alpha):
    """Exhaustive max of the mixture statistic over size-s subsets."""
    n_nodes = snapshots[0].n_nodes
    return max(mixture_statistic_of_subset(snapshots, nodes, k, t, p0, p1, alpha)
               for nodes in combinations(range(n_nodes), s))


def window_counts_direct(snapshots, k, t):
    n_nodes = snapshots[0].n_nodes
    return np.array([pair_count(snapshots, i, j, k, t)
                     for j in range(n_nodes) for i in range(j)])
