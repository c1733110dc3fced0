"""Per-edge and per-subset likelihood statistics.

Everything is computed from windowed cumulative edge counts: for the window
sum S = sum_{m=k+1}^t x_m of an edge's indicators, the per-edge log-likelihood
ratio between fire rates p1 and p0 is

    u = (c0 - c1) * S + (t - k) * c1,    c0 = log(p1/p0), c1 = log((1-p1)/(1-p0))

and community / mixture statistics are sums of u (or of the soft threshold
h(u)) over node pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .graphs import GraphSnapshot, edge_index, n_pairs

P1_CLAMP_EPS = 1e-6


@dataclass(frozen=True)
class LlrParams:
    """Pre/post-change edge probabilities with cached log-ratio constants."""

    p0: float
    p1: float
    c0: float = field(init=False)
    c1: float = field(init=False)

    def __post_init__(self):
        if not 0.0 < self.p0 < 1.0:
            raise ValueError(f"p0={self.p0} outside (0, 1)")
        if not 0.0 < self.p1 < 1.0:
            raise ValueError(f"p1={self.p1} outside (0, 1)")
        if self.p1 <= self.p0:
            raise ValueError(f"p1={self.p1} must exceed p0={self.p0}")
        object.__setattr__(self, "c0", math.log(self.p1 / self.p0))
        object.__setattr__(self, "c1", math.log((1.0 - self.p1) / (1.0 - self.p0)))


class EdgeCountWindow:
    """Ring buffer of cumulative per-edge counts over a sliding window.

    Stores C_k = sum_{m<=k} x_m for the most recent window_len+1 values of k,
    so any windowed count C_t - C_k is O(1) and independent of window length.
    Single writer (push); queries are read-only.
    """

    def __init__(self, n_nodes: int, window_len: int):
        if window_len < 0:
            raise ValueError("window_len must be non-negative")
        self.n_nodes = n_nodes
        self.window_len = window_len
        self.t = 0
        self._n_edges = n_pairs(n_nodes)
        # slot r holds C_k for k with k % (window_len+1) == r
        self._ring = np.zeros((window_len + 1, self._n_edges), dtype=np.int64)

    def push(self, snapshot: GraphSnapshot) -> None:
        if snapshot.n_nodes != self.n_nodes:
            raise ValueError("snapshot node count mismatch")
        cap = self.window_len + 1
        prev = self._ring[self.t % cap]
        self.t += 1
        self._ring[self.t % cap] = prev + snapshot.bits
    def _check_k(self, k: int) -> None:
        if not (self.t - self.window_len <= k <= self.t) or k < 0:
            raise ValueError(
                f"k={k} outside retained window [{max(0, self.t - self.window_len)}, {self.t}]"
            )

    def cumulative(self, k: int) -> np.ndarray:
        """C_k for all edges (canonical order).  k must be in the window."""
        self._check_k(k)
        return self._ring[k % (self.window_len + 1)]

    def windowed_counts(self, k: int) -> np.ndarray:
        """sum_{m=k+1}^t x_m for all edges."""
        return self._ring[self.t % (self.window_len + 1)] - self.cumulative(k)

    def windowed_count(self, i: int, j: int, k: int) -> int:
        return int(self.windowed_counts(k)[edge_index(i, j)])


def _pair_indices(nodes: Iterable[int]) -> list[int]:
    nodes = sorted(set(nodes))
    return [edge_index(a, b) for idx, b in enumerate(nodes) for a in nodes[:idx]]


def u_stat(win: EdgeCountWindow, params: LlrParams, edge: tuple[int, int], k: int) -> float:
    """Per-edge log-likelihood ratio for a change at time k (0 when k = t)."""
    tau = win.t - k
    count = win.windowed_count(edge[0], edge[1], k)
    return (params.c0 - params.c1) * count + tau * params.c1


def u_stats_all(win: EdgeCountWindow, params: LlrParams, k: int) -> np.ndarray:
    """u_stat for every edge at once (canonical order)."""
    tau = win.t - k
    return (params.c0 - params.c1) * win.windowed_counts(k) + tau * params.c1


def community_llr(win: EdgeCountWindow, params: LlrParams, nodes: Iterable[int], k: int) -> float:
    """Log-likelihood ratio of a community on ``nodes``: sum of u over its pairs."""
    idx = _pair_indices(nodes)
    if not idx:
        raise ValueError("community needs at least 2 nodes")
    tau = win.t - k
    count = int(win.windowed_counts(k)[idx].sum())
    return (params.c0 - params.c1) * count + len(idx) * tau * params.c1


def mle_p1(win: EdgeCountWindow, nodes: Iterable[int], k: int, p0: float) -> tuple[float, float]:
    """Maximum-likelihood estimate of the in-community fire rate.

    Returns (clamped, raw).  The raw MLE is the fraction of observed pair
    slots that fired; it is clamped to [p0, 1 - 1e-6] so the plug-in LLR is
    nonnegative (one-sided alternative) and finite.
    """
    idx = _pair_indices(nodes)
    if not idx:
        raise ValueError("community needs at least 2 nodes")
    tau = win.t - k
    if tau <= 0:
        raise ValueError("MLE undefined on an empty window (k = t)")
    raw = float(win.windowed_counts(k)[idx].sum()) / (len(idx) * tau)
    return min(max(raw, p0), 1.0 - P1_CLAMP_EPS), raw


def soft_threshold_h(x, alpha: float):
    """log(1 - alpha + alpha*e^x), overflow-safe; works on scalars and arrays.

    For large x this is x + log(alpha) + log1p((1-alpha) e^{-x} / alpha).
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha={alpha} outside (0, 1]")
    if alpha == 1.0:
        return x if np.isscalar(x) else np.asarray(x, dtype=float)
    x_arr = np.asarray(x, dtype=float)
    small = x_arr < 30.0
    out = np.empty_like(x_arr)
    out[small] = np.log1p(alpha * np.expm1(x_arr[small]))
    big = ~small
    out[big] = x_arr[big] + math.log(alpha) + np.log1p(
        (1.0 - alpha) * np.exp(-x_arr[big]) / alpha
    )
    return float(out) if np.isscalar(x) else out


def mixture_stat(
    win: EdgeCountWindow,
    params: LlrParams,
    nodes: Iterable[int],
    k: int,
    alpha: float,
) -> float:
    """Mixture statistic M over the pairs inside ``nodes``: sum of h(u)."""
    idx = _pair_indices(nodes)
    if not idx:
        raise ValueError("node set needs at least 2 nodes")
    u = u_stats_all(win, params, k)[idx]
    return float(np.sum(soft_threshold_h(u, alpha)))
