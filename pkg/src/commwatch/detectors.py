"""Sequential stopping rules: exhaustive search (with CUSUM fast path),
mixture, and hierarchical mixture.

Each detector consumes snapshots one at a time; ``step`` returns the
maximized statistic, the maximizing hypothesized changepoint k, and (for ES
and H-Mix) the best node subset.  Tie-breaking is deterministic: the most
recent k wins, then the lexicographically smallest subset / smallest node
index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Optional

import numpy as np

from .graphs import GraphSnapshot, StreamHandle, edge_index, n_pairs
from .stats import EdgeCountWindow, LlrParams, P1_CLAMP_EPS, soft_threshold_h, u_stats_all

METHODS = ("es", "mixture", "hmix")


@dataclass(frozen=True)
class DetectorConfig:
    method: str
    p0: float
    threshold: float
    p1: Optional[float] = None  # None = unknown, plug in the MLE
    s: Optional[int] = None     # community size (ES, H-Mix)
    alpha: Optional[float] = None  # mixture weight (Mixture, H-Mix)
    m0: int = 0
    m1: float = 200  # math.inf allowed only for the ES CUSUM fast path

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not 0.0 < self.p0 < 1.0:
            raise ValueError(f"p0={self.p0} outside (0, 1)")
        if self.p1 is not None and not self.p0 < self.p1 < 1.0:
            raise ValueError(f"p1={self.p1} must lie in (p0, 1)")
        if self.threshold < 0:
            raise ValueError("threshold must be nonnegative")
        if self.m0 < 0 or self.m1 < self.m0:
            raise ValueError(f"need 0 <= m0 <= m1, got [{self.m0}, {self.m1}]")
        if self.method in ("es", "hmix"):
            if self.s is None or self.s < 2:
                raise ValueError(f"{self.method} requires community size s >= 2")
        if self.method in ("mixture", "hmix"):
            if self.alpha is None or not 0.0 < self.alpha <= 1.0:
                raise ValueError(f"{self.method} requires alpha in (0, 1]")
        if self.method == "es" and self.p1 is None and self.m0 < 1:
            raise ValueError("ES with unknown p1 needs m0 >= 1 (MLE undefined at k = t)")
        if math.isinf(self.m1) and not (self.method == "es" and self.p1 is not None and self.m0 == 0):
            raise ValueError("unbounded m1 is only supported by the ES CUSUM fast path")

    def to_json_dict(self) -> dict:
        return {
            "method": self.method,
            "p0": self.p0,
            "p1": self.p1,
            "s": self.s,
            "alpha": self.alpha,
            "m0": self.m0,
            "m1": None if math.isinf(self.m1) else int(self.m1),
            "threshold": self.threshold,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "DetectorConfig":
        m1 = d.get("m1", 200)
        return cls(
            method=d["method"],
            p0=d["p0"],
            p1=d.get("p1"),
            s=d.get("s"),
            alpha=d.get("alpha"),
            m0=d.get("m0", 0),
            m1=math.inf if m1 is None else m1,
            threshold=d["threshold"],
        )


@dataclass(frozen=True)
class StepReport:
    t: int
    statistic: float
    alarmed: bool
    argmax_k: int
    localized_set: Optional[frozenset] = None


class _WindowedDetector:
    """Shared plumbing: the cumulative-count window plus k-range iteration."""

    def __init__(self, config: DetectorConfig, n_nodes: int):
        self.config = config
        self.n_nodes = n_nodes
        self.win = EdgeCountWindow(n_nodes, int(config.m1))

    @property
    def t(self) -> int:
        return self.win.t

    def _k_range(self):
        """Admissible k, most recent first (ties prefer the latest change)."""
        t = self.win.t
        lo = max(0, t - int(self.config.m1))
        hi = t - self.config.m0
        return range(hi, lo - 1, -1)

    def step(self, snapshot: GraphSnapshot) -> StepReport:
        self.win.push(snapshot)
        stat, argmax_k, localized = self._evaluate()
        return StepReport(
            t=self.win.t,
            statistic=stat,
            alarmed=stat >= self.config.threshold,
            argmax_k=argmax_k,
            localized_set=localized,
        )


class MixtureDetector(_WindowedDetector):
    """Soft-threshold mixture rule over all node pairs; no localization.

    With unknown p1, a single global MLE (over the full edge set) is plugged
    into every edge's LLR before soft-thresholding.
    """

    def __init__(self, config: DetectorConfig, n_nodes: int):
        if config.method != "mixture":
            raise ValueError("config.method must be 'mixture'")
        super().__init__(config, n_nodes)
        if config.p1 is not None:
            self._params = LlrParams(config.p0, config.p1)

    def _edge_stats(self, k: int) -> np.ndarray:
        cfg = self.config
        if cfg.p1 is not None:
            return u_stats_all(self.win, self._params, k)
        tau = self.win.t - k
        counts = self.win.windowed_counts(k)
        if tau == 0:
            return np.zeros_like(counts, dtype=float)
        raw = counts.sum() / (len(counts) * tau)
        p1_hat = min(max(raw, cfg.p0), 1.0 - P1_CLAMP_EPS)
        params = _plugin_params(cfg.p0, p1_hat)
        if params is None:
            return np.zeros_like(counts, dtype=float)
        return (params.c0 - params.c1) * counts + tau * params.c1

    def _evaluate(self):
        best, best_k = -math.inf, self.win.t
        for k in self._k_range():
            stat = float(np.sum(soft_threshold_h(self._edge_stats(k), self.config.alpha)))
            if stat > best:
                best, best_k = stat, k
        return best, best_k, None


def _plugin_params(p0: float, p1_hat: float) -> Optional[LlrParams]:
    """LlrParams for a plug-in estimate; None when clamped down to p0 (LLR = 0)."""
    if p1_hat <= p0:
        return None
    return LlrParams(p0, p1_hat)


class ExhaustiveSearchDetector(_WindowedDetector):
    """Max log-likelihood ratio over all size-s node subsets and windowed k."""

    def __init__(self, config: DetectorConfig, n_nodes: int):
        if config.method != "es":
            raise ValueError("config.method must be 'es'")
        if config.s > n_nodes:
            raise ValueError(f"s={config.s} exceeds n_nodes={n_nodes}")
        super().__init__(config, n_nodes)
        self._subsets = list(combinations(range(n_nodes), config.s))
        self._subset_pairs = [
            [edge_index(a, b) for a, b in combinations(sub, 2)] for sub in self._subsets
        ]
        self._pair_idx = np.array(self._subset_pairs, dtype=np.int64)
        if config.p1 is not None:
            self._params = LlrParams(config.p0, config.p1)

    def _evaluate(self):
        cfg = self.config
        n_sub_pairs = self._pair_idx.shape[1]
        best, best_k, best_sub = -math.inf, self.win.t, None
        for k in self._k_range():
            tau = self.win.t - k
            counts = self.win.windowed_counts(k)
            sub_counts = counts[self._pair_idx].sum(axis=1)
            if cfg.p1 is not None:
                stats = (self._params.c0 - self._params.c1) * sub_counts \
                    + n_sub_pairs * tau * self._params.c1
                sub = int(np.argmax(stats))  # first max = lexicographically smallest
                if stats[sub] > best:
                    best, best_k, best_sub = float(stats[sub]), k, self._subsets[sub]
            else:
                # MLE is a fresh nonlinear plug-in per (subset, k); no shortcut
                for sub, n in enumerate(sub_counts):
                    raw = n / (n_sub_pairs * tau)
                    params = _plugin_params(cfg.p0, min(max(raw, cfg.p0), 1.0 - P1_CLAMP_EPS))
                    stat = 0.0 if params is None else \
                        (params.c0 - params.c1) * n + n_sub_pairs * tau * params.c1
                    if stat > best:
                        best, best_k, best_sub = float(stat), k, self._subsets[sub]
        return best, best_k, frozenset(best_sub)


class EsCusumDetector:
    """Recursive (unbounded-window) equivalent of ES with known p1 and m0 = 0.

    Keeps one reflected cumulative sum per size-s subset; stopping times are
    identical to the windowed search with m1 >= t.
    """

    def __init__(self, config: DetectorConfig, n_nodes: int):
        if config.method != "es":
            raise ValueError("config.method must be 'es'")
        if config.p1 is None:
            raise ValueError("CUSUM fast path requires known p1 (no recursion for the MLE)")
        if config.m0 != 0 or not math.isinf(config.m1):
            raise ValueError("CUSUM fast path requires m0 = 0 and unbounded m1")
        if config.s > n_nodes:
            raise ValueError(f"s={config.s} exceeds n_nodes={n_nodes}")
        self.config = config
        self.n_nodes = n_nodes
        self._params = LlrParams(config.p0, config.p1)
        self._subsets = list(combinations(range(n_nodes), config.s))
        self._pair_idx = np.array(
            [[edge_index(a, b) for a, b in combinations(sub, 2)] for sub in self._subsets],
            dtype=np.int64,
        )
        self._w = np.zeros(len(self._subsets))
        self.t = 0

    def step(self, snapshot: GraphSnapshot) -> StepReport:
        self.t += 1
        p = self._params
        n_sub_pairs = self._pair_idx.shape[1]
        inc = (p.c0 - p.c1) * snapshot.bits[self._pair_idx].sum(axis=1) + n_sub_pairs * p.c1
        self._w = np.maximum(self._w + inc, 0.0)
        sub = int(np.argmax(self._w))
        stat = float(self._w[sub])
        return StepReport(
            t=self.t,
            statistic=stat,
            alarmed=stat >= self.config.threshold,
            argmax_k=self.t,  # the recursion does not track the maximizing k
            localized_set=frozenset(self._subsets[sub]),
        )


class HMixDetector(_WindowedDetector):
    """Greedy node-removal chain keeping the subgraph with the largest
    mixture statistic until s nodes remain (evaluated per windowed k).
    """

    def __init__(self, config: DetectorConfig, n_nodes: int):
        if config.method != "hmix":
            raise ValueError("config.method must be 'hmix'")
        if config.s > n_nodes:
            raise ValueError(f"s={config.s} exceeds n_nodes={n_nodes}")
        super().__init__(config, n_nodes)
        if config.p1 is None:
            raise ValueError("H-Mix requires known p1")
        self._params = LlrParams(config.p0, config.p1)

    def _greedy(self, h_edges: np.ndarray) -> tuple[float, tuple[int, ...]]:
        """Run the removal chain on precomputed per-edge h values."""
        nodes = list(range(self.n_nodes))
        while len(nodes) > self.config.s:
            best_val, best_i = -math.inf, None
            for i in nodes:
                val = 0.0
                rest = [v for v in nodes if v != i]
                for bi, b in enumerate(rest):
                    for a in rest[:bi]:
                        val += h_edges[edge_index(a, b)]
                if val > best_val:  # strict > keeps the smallest removed index
                    best_val, best_i = val, i
            nodes.remove(best_i)
        val = 0.0
        for bi, b in enumerate(nodes):
            for a in nodes[:bi]:
                val += h_edges[edge_index(a, b)]
        return val, tuple(nodes)

    def _evaluate(self):
        best, best_k, best_set = -math.inf, self.win.t, None
        for k in self._k_range():
            h_edges = soft_threshold_h(
                u_stats_all(self.win, self._params, k), self.config.alpha
            )
            p_k, survivors = self._greedy(h_edges)
            if p_k > best:
                best, best_k, best_set = p_k, k, survivors
        return best, best_k, frozenset(best_set)


def make_detector(config: DetectorConfig, n_nodes: int):
    if config.method == "mixture":
        return MixtureDetector(config, n_nodes)
    if config.method == "hmix":
        return HMixDetector(config, n_nodes)
    if math.isinf(config.m1):
        return EsCusumDetector(config, n_nodes)
    return ExhaustiveSearchDetector(config, n_nodes)


@dataclass(frozen=True)
class AlarmResult:
    stopping_time: int  # max_t when censored
    censored: bool
    report: StepReport


def run_until_alarm(detector, stream: StreamHandle, max_t: int) -> AlarmResult:
    """Feed snapshots until the statistic crosses the threshold (or max_t)."""
    if max_t < 1:
        raise ValueError("max_t must be at least 1")
    report = None
    for _ in range(max_t):
        report = detector.step(next(stream))
        if report.alarmed:
            return AlarmResult(report.t, False, report)
    return AlarmResult(report.t, True, report)
