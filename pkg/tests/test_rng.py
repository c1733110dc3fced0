"""The counter generator must be identical between the numpy and the
compiled implementation, and behave like iid uniforms."""

import numpy as np
from scipy import stats as sps

from commwatch import _kernels
from commwatch._rng import edge_uniform_at, edge_uniforms


def test_numpy_and_compiled_draws_are_bit_identical():
    for seed in (0, 1, 42, 2**63 - 1, 123456789):
        for t in (1, 2, 57, 10_000):
            u_np = edge_uniforms(seed, t, 20)
            u_nb = np.array([_kernels._edge_uniform(seed, t, e) for e in range(20)])
            assert np.array_equal(u_np, u_nb)


def test_draws_in_unit_interval():
    u = edge_uniforms(7, 3, 10_000)
    assert np.all(u >= 0.0) and np.all(u < 1.0)


def test_deterministic_and_sensitive_to_all_counters():
    base = edge_uniforms(5, 9, 16)
    assert np.array_equal(base, edge_uniforms(5, 9, 16))
    assert not np.array_equal(base, edge_uniforms(6, 9, 16))
    assert not np.array_equal(base, edge_uniforms(5, 10, 16))


def test_edge_uniform_at_matches_bulk_draws():
    ids = np.array([0, 3, 7, 11])
    bulk = edge_uniforms(99, 4, 12)
    assert np.array_equal(edge_uniform_at(99, 4, ids), bulk[ids])


def test_marginals_look_uniform():
    # KS test on a big batch; threshold far below any plausible false alarm
    u = np.concatenate([edge_uniforms(1234, t, 100) for t in range(1, 101)])
    assert sps.kstest(u, "uniform").pvalue > 1e-6


def test_no_pairwise_correlation_across_time():
    a = np.array([edge_uniforms(31, t, 4)[0] for t in range(1, 2001)])
    b = np.array([edge_uniforms(31, t, 4)[1] for t in range(1, 2001)])
    lag1 = np.corrcoef(a[:-1], a[1:])[0, 1]
    cross = np.corrcoef(a, b)[0, 1]
    assert abs(lag1) < 0.08 and abs(cross) < 0.08
