"""Graph snapshots and the Erdos-Renyi stream simulator.

A snapshot of an N-node undirected simple graph is stored as the lower
triangle of the adjacency matrix, flattened edge-by-edge: edge (i, j) with
i < j lives at index j*(j-1)/2 + i.  Node indices are 0-based everywhere.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from ._rng import edge_uniforms

Edge = tuple[int, int]

INFINITE = math.inf


def n_pairs(n_nodes: int) -> int:
    return n_nodes * (n_nodes - 1) // 2


def edge_index(i: int, j: int) -> int:
    """Canonical lower-triangle index of edge (i, j), i < j."""
    if i > j:
        i, j = j, i
    if i == j:
        raise ValueError(f"self-loop ({i}, {j}) is not an edge")
    return j * (j - 1) // 2 + i


def edge_list(n_nodes: int) -> list[Edge]:
    """All edges in canonical index order."""
    return [(i, j) for j in range(n_nodes) for i in range(j)]


def clique_edges(nodes: Iterable[int]) -> set[Edge]:
    nodes = sorted(set(nodes))
    return {(a, b) for idx, b in enumerate(nodes) for a in nodes[:idx]}


@dataclass(frozen=True)
class GraphSnapshot:
    """One observed adjacency matrix, stored as a lower-triangle edge bitset."""

    n_nodes: int
    bits: np.ndarray  # bool, length n_nodes*(n_nodes-1)/2

    def __post_init__(self):
        if self.n_nodes < 1:
            raise ValueError("n_nodes must be positive")
        if self.bits.shape != (n_pairs(self.n_nodes),):
            raise ValueError("bitset length does not match n_nodes")

    @classmethod
    def from_edges(cls, n_nodes: int, edges: Iterable[Edge]) -> "GraphSnapshot":
        bits = np.zeros(n_pairs(n_nodes), dtype=bool)
        for i, j in edges:
            if not (0 <= min(i, j) and max(i, j) < n_nodes):
                raise ValueError(f"edge ({i}, {j}) out of range for {n_nodes} nodes")
            bits[edge_index(i, j)] = True
        return cls(n_nodes, bits)

    def has_edge(self, i: int, j: int) -> bool:
        return bool(self.bits[edge_index(i, j)])

    @property
    def edges(self) -> list[Edge]:
        all_edges = edge_list(self.n_nodes)
        return [all_edges[k] for k in np.flatnonzero(self.bits)]

    @property
    def n_edges(self) -> int:
        return int(self.bits.sum())


@dataclass(frozen=True)
class ScenarioSpec:
    """Generative description of a snapshot stream.

    Before the changepoint every edge fires independently with probability
    ``p0``; strictly after it, edges in ``active_edges`` fire with ``p1``.
    ``changepoint=inf`` (or None in JSON) means no change ever happens.
    """

    n_nodes: int
    p0: float
    p1: float
    changepoint: float = INFINITE  # kappa; change active for t > kappa
    active_edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.n_nodes < 2:
            raise ValueError("n_nodes must be at least 2")
        if not 0.0 <= self.p0 <= 1.0:
            raise ValueError(f"p0={self.p0} outside [0, 1]")
        if not 0.0 <= self.p1 <= 1.0:
            raise ValueError(f"p1={self.p1} outside [0, 1]")
        if self.changepoint != INFINITE:
            if self.changepoint < 0 or self.changepoint != int(self.changepoint):
                raise ValueError("changepoint must be a non-negative integer or inf")
        canon = frozenset(tuple(sorted(e)) for e in self.active_edges)
        object.__setattr__(self, "active_edges", canon)
        for i, j in canon:
            if i == j:
                raise ValueError(f"active edge ({i}, {j}) is a self-loop")
            if not (0 <= i and j < self.n_nodes):
                raise ValueError(f"active edge ({i}, {j}) out of range")

    @classmethod
    def community(cls, n_nodes, p0, p1, changepoint, nodes) -> "ScenarioSpec":
        """Scenario whose active edges are the clique over ``nodes``."""
        return cls(n_nodes, p0, p1, changepoint, frozenset(clique_edges(nodes)))

    @classmethod
    def null(cls, n_nodes, p0) -> "ScenarioSpec":
        return cls(n_nodes, p0, p0 if p0 > 0 else 0.5, INFINITE, frozenset())

    @property
    def community_nodes(self) -> set[int] | None:
        """The node set if active_edges is exactly a clique, else None."""
        nodes = {v for e in self.active_edges for v in e}
        if len(nodes) >= 2 and clique_edges(nodes) == set(self.active_edges):
            return nodes
        return None

    def edge_probabilities(self, t: int) -> np.ndarray:
        """Per-edge Bernoulli probability at time t, in canonical index order."""
        p = np.full(n_pairs(self.n_nodes), self.p0)
        if t > self.changepoint:
            for i, j in self.active_edges:
                p[edge_index(i, j)] = self.p1
        return p

    def to_json_dict(self, seed: int | None = None) -> dict:
        d = {
            "n_nodes": self.n_nodes,
            "p0": self.p0,
            "p1": self.p1,
            "changepoint": None if self.changepoint == INFINITE else int(self.changepoint),
        }
        nodes = self.community_nodes
        if nodes is not None:
            d["community"] = sorted(nodes)
        else:
            d["active_edges"] = sorted(list(e) for e in self.active_edges)
        if seed is not None:
            d["seed"] = seed
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "ScenarioSpec":
        kappa = d.get("changepoint")
        kappa = INFINITE if kappa is None else kappa
        if "community" in d:
            return cls.community(d["n_nodes"], d["p0"], d["p1"], kappa, d["community"])
        edges = frozenset(tuple(e) for e in d.get("active_edges", []))
        return cls(d["n_nodes"], d["p0"], d["p1"], kappa, edges)


def sample_snapshot(spec: ScenarioSpec, t: int, seed: int) -> GraphSnapshot:
    """Draw the snapshot at time t.  Pure function of (spec, t, seed)."""
    if t < 1:
        raise ValueError("time index t is 1-based")
    u = edge_uniforms(seed, t, n_pairs(spec.n_nodes))
    return GraphSnapshot(spec.n_nodes, u < spec.edge_probabilities(t))


@dataclass
class StreamHandle:
    """Sequential cursor over a scenario's snapshots.

    Identical (scenario, seed) always yields the identical sequence; the
    handle itself is the only mutable piece (single consumer at a time).
    """

    scenario: ScenarioSpec
    seed: int
    position: int = 0  # last time index served

    def __iter__(self) -> Iterator[GraphSnapshot]:
        return self

    def __next__(self) -> GraphSnapshot:
        self.position += 1
        return sample_snapshot(self.scenario, self.position, self.seed)


def stream(scenario: ScenarioSpec, seed: int) -> StreamHandle:
    return StreamHandle(scenario, seed)


# --- JSONL stream serialization -------------------------------------------

def write_stream_jsonl(path, spec: ScenarioSpec, seed: int, n_steps: int) -> None:
    with open(path, "w") as fh:
        handle = stream(spec, seed)
        for t in range(1, n_steps + 1):
            snap = next(handle)
            fh.write(json.dumps({"t": t, "edges": [list(e) for e in snap.edges]}))
            fh.write("\n")


def read_stream_jsonl(path, n_nodes: int) -> Iterator[GraphSnapshot]:
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            yield GraphSnapshot.from_edges(n_nodes, [tuple(e) for e in rec["edges"]])
