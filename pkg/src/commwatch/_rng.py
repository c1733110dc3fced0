"""Counter-based per-edge randomness.

Every Bernoulli edge draw is a pure function of (seed, t, edge index), so
snapshots can be regenerated in any order and Monte Carlo trials replayed
deterministically.  The generator is the splitmix64 finalizer applied to a
chained counter; the same arithmetic is duplicated in the numba kernels
(see _kernels.py) and pinned equal by tests.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)



def _mix64(z: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer (good avalanche, trivially vectorizable)."""
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def edge_uniforms(seed: int, t: int, n_edges: int) -> np.ndarray:
    """Uniform(0,1) draws for edges 0..n_edges-1 at time t.

    Draw ``e`` depends only on (seed, t, e); see edge_uniform_at for the
    scalar, arbitrary-edge-id version.
    """
    return edge_uniform_at(seed, t, np.arange(n_edges, dtype=np.uint64))


def edge_uniform_at(seed: int, t: int, edge_ids) -> np.ndarray:
    """Uniforms for explicit edge ids (used by permutation-equivariance tests)."""
    edge_ids = np.asarray(edge_ids, dtype=np.uint64)
    # uint64 wraparound is intentional
    with np.errstate(over="ignore"):
        z = _mix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) ^ _GOLDEN)
        z = _mix64(z ^ np.uint64(t))
        z = _mix64(z ^ (edge_ids + _GOLDEN))
    return (z >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
