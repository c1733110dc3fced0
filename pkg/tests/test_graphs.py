import json
import math

import numpy as np
import pytest

from commwatch.graphs import (
    GraphSnapshot,
    ScenarioSpec,
    clique_edges,
    edge_index,
    edge_list,
    n_pairs,
    read_stream_jsonl,
    sample_snapshot,
    stream,
    write_stream_jsonl,
)


def test_edge_index_is_a_bijection_onto_canonical_order():
    n = 9
    assert [edge_index(i, j) for i, j in edge_list(n)] == list(range(n_pairs(n)))
    assert edge_index(3, 1) == edge_index(1, 3)
    with pytest.raises(ValueError):
        edge_index(2, 2)


def test_clique_edges():
    assert clique_edges([4, 0, 2]) == {(0, 2), (0, 4), (2, 4)}
    assert clique_edges([1]) == set()


def test_snapshot_from_edges_round_trip():
    snap = GraphSnapshot.from_edges(5, [(0, 1), (3, 2), (1, 4)])
    assert snap.edges == [(0, 1), (2, 3), (1, 4)]
    assert snap.has_edge(2, 3) and not snap.has_edge(0, 4)
    assert snap.n_edges == 3
    with pytest.raises(ValueError):
        GraphSnapshot.from_edges(3, [(0, 5)])


def test_zero_probability_scenario_has_no_edges():
    spec = ScenarioSpec(4, 0.0, 0.5)
    for t in range(1, 20):
        assert sample_snapshot(spec, t, seed=3).n_edges == 0


def test_unit_probability_scenario_is_complete():
    spec = ScenarioSpec(4, 1.0, 1.0)
    for t in range(1, 20):
        assert sample_snapshot(spec, t, seed=3).n_edges == n_pairs(4)


def test_edge_frequency_matches_binomial_mean():
    # mean edge count over T snapshots: Binomial(T * n_pairs, p0) / T
    spec = ScenarioSpec.null(6, 0.3)
    T = 4000
    total = sum(sample_snapshot(spec, t, seed=11).n_edges for t in range(1, T + 1))
    n = T * n_pairs(6)
    se = math.sqrt(n * 0.3 * 0.7)
    assert abs(total - n * 0.3) < 5 * se


def test_changepoint_switches_only_the_active_edges():
    spec = ScenarioSpec.community(6, 0.2, 0.9, changepoint=50, nodes=(0, 1, 2))
    pre = spec.edge_probabilities(50)
    post = spec.edge_probabilities(51)
    assert np.all(pre == 0.2)
    active = [edge_index(0, 1), edge_index(0, 2), edge_index(1, 2)]
    assert np.all(post[active] == 0.9)
    passive = np.setdiff1d(np.arange(n_pairs(6)), active)
    assert np.all(post[passive] == 0.2)


def test_observed_frequencies_straddle_the_changepoint():
    spec = ScenarioSpec.community(6, 0.2, 0.9, changepoint=50, nodes=(0, 1, 2))
    hits_pre = sum(sample_snapshot(spec, t, 5).has_edge(0, 1) for t in range(1, 51))
    hits_post = sum(sample_snapshot(spec, t, 5).has_edge(0, 1) for t in range(51, 351))
    # 5-sigma binomial bands around p0 and p1
    assert abs(hits_pre - 50 * 0.2) < 5 * math.sqrt(50 * 0.2 * 0.8)
    assert abs(hits_post - 300 * 0.9) < 5 * math.sqrt(300 * 0.9 * 0.1)


def test_stream_is_reproducible_and_stateful():
    spec = ScenarioSpec.null(5, 0.4)
    handle = stream(spec, 8)
    first = next(handle)
    second = next(handle)
    assert handle.position == 2
    replay = stream(spec, 8)
    assert np.array_equal(first.bits, next(replay).bits)
    assert np.array_equal(second.bits, next(replay).bits)


def test_scenario_json_round_trip_with_community():
    spec = ScenarioSpec.community(6, 0.3, 0.8, changepoint=7, nodes=(1, 3, 5))
    again = ScenarioSpec.from_json_dict(spec.to_json_dict())
    assert again == spec
    assert spec.to_json_dict()["community"] == [1, 3, 5]


def test_scenario_json_round_trip_with_loose_edges():
    edges = frozenset({(0, 1), (2, 3), (4, 5)})
    spec = ScenarioSpec(6, 0.2, 0.9, changepoint=0, active_edges=edges)
    d = spec.to_json_dict()
    assert "community" not in d  # three disjoint edges are not a clique
    assert ScenarioSpec.from_json_dict(d) == spec


def test_null_scenario_serializes_changepoint_as_null():
    d = ScenarioSpec.null(6, 0.3).to_json_dict()
    assert d["changepoint"] is None
    assert math.isinf(ScenarioSpec.from_json_dict(d).changepoint)


def test_scenario_validation():
    with pytest.raises(ValueError):
        ScenarioSpec(1, 0.3, 0.8)
    with pytest.raises(ValueError):
        ScenarioSpec(4, -0.1, 0.8)
    with pytest.raises(ValueError):
        ScenarioSpec(4, 0.3, 0.8, changepoint=2.5)
    with pytest.raises(ValueError):
        ScenarioSpec(4, 0.3, 0.8, active_edges=frozenset({(0, 4)}))


def test_jsonl_round_trip(tmp_path):
    spec = ScenarioSpec.community(6, 0.3, 0.8, changepoint=3, nodes=(0, 1, 2))
    path = tmp_path / "s.jsonl"
    write_stream_jsonl(path, spec, seed=21, n_steps=25)
    lines = path.read_text().splitlines()
    assert len(lines) == 25
    assert json.loads(lines[0])["t"] == 1
    back = list(read_stream_jsonl(path, 6))
    for t, snap in enumerate(back, start=1):
        assert np.array_equal(snap.bits, sample_snapshot(spec, t, 21).bits)
