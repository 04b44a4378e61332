import numpy as np
import pytest
from hypothesis import given, strategies as st

from spatialcsma.glauber import ScheduleState, WeightFunction, update_probability
from spatialcsma.schedule import (ProtocolConfig, is_valid_decision_schedule, parallel_update,
                                  protocol_from_backoffs, run_decision_protocol, sample_decision_masks)
from spatialcsma.topology import NetworkConfig, Topology, generate_topology, two_hop_closure

from conftest import chain, scattered

WF = WeightFunction()


def test_config_validation():
    for bad in (dict(W=1), dict(W=2.5), dict(abstain=1.0), dict(abstain=-0.1)):
        with pytest.raises(ValueError):
            ProtocolConfig(**bad)


def test_validity_examples():
    clique = scattered([(0, 0), (1, 0), (0, 1)])
    assert is_valid_decision_schedule(clique, set())
    assert all(is_valid_decision_schedule(clique, {i}) for i in range(3))
    assert not is_valid_decision_schedule(clique, {0, 2})
    path = chain(3)
    assert not is_valid_decision_schedule(path, {0, 2})


def test_no_edges_selects_everyone():
    far = scattered([(0, 0), (10, 0), (0, 10), (10, 10)])
    rng = np.random.default_rng(0)
    for _ in range(50):
        assert run_decision_protocol(far, ProtocolConfig(), rng).members == {0, 1, 2, 3}


def test_complete_graph_at_most_one():
    clique = scattered([(0, 0), (1, 0), (0, 1), (1, 1), (0.5, 0.5)])
    masks = sample_decision_masks(clique, ProtocolConfig(W=4), np.random.default_rng(1), 5000)
    assert masks.sum(axis=1).max() <= 1
    assert masks.any(axis=0).all()


def _check_trace(t, sched):
    tr = sched.trace
    s = set(np.flatnonzero(tr.in_s))
    # S is independent in the conflict graph
    assert not any(t.adjacency[i, j] for i in s for j in s)
    for i in s:
        dropped = any(j not in s and len(t.neighbour_sets[j] & s) >= 2 and i in t.neighbour_sets[j]
                      for j in range(t.n_links))
        assert bool(tr.dropped[i]) == dropped
    assert sched.members == s - set(np.flatnonzero(tr.dropped))
    for i in sched.members:
        assert not (two_hop_closure(t, i) & sched.members)


def test_protocol_traces_on_random_topologies():
    rng = np.random.default_rng(3)
    for _ in range(20):
        t = generate_topology(NetworkConfig(), rng)
        for W in (2, 8, 32):
            for _ in range(20):
                _check_trace(t, run_decision_protocol(t, ProtocolConfig(W=W), rng))


def test_trace_text_lists_events():
    t = chain(3)
    sched = run_decision_protocol(t, ProtocolConfig(W=4), np.random.default_rng(0))
    text = sched.trace.to_text()
    assert text.endswith("\n")
    events = [line.split()[2] for line in text.splitlines()]
    assert set(events) <= {"INTENT", "COLLISION", "DEFER", "DETECT", "DROP", "ABSTAIN"}
    assert events.count("INTENT") >= len(sched.S)


def test_path_endpoint_defect():
    # a - b - c: whenever a enters S, b is silenced and c enters S too; b's DETECT drops both
    masks = sample_decision_masks(chain(3), ProtocolConfig(W=32), np.random.default_rng(0), 20000)
    assert not masks[:, 0].any() and not masks[:, 2].any()
    assert masks[:, 1].mean() > 0.2


def test_abstention_restores_coverage():
    masks = sample_decision_masks(chain(3), ProtocolConfig(W=32, abstain=0.3), np.random.default_rng(0), 20000)
    assert masks.any(axis=0).all()


def test_backoff_table_cases():
    t = chain(3)
    # b first: a and c are blocked
    out = protocol_from_backoffs(t, np.array([[3, 0, 5]]), 8)
    assert out["in_d"][0].tolist() == [False, True, False]
    # a and b collide at slot 1; c hears b's INTENT alone and defers
    out = protocol_from_backoffs(t, np.array([[1, 1, 4]]), 8)
    assert out["collided"][0].tolist() == [True, True, False]
    assert out["intent_slot"][0].tolist() == [1, 1, -1]
    assert not out["in_s"][0].any()
    # a first silences b, c then joins S, b detects two and both drop
    out = protocol_from_backoffs(t, np.array([[0, 5, 3]]), 8)
    assert out["in_s"][0].tolist() == [True, False, True]
    assert out["detect_sent"][0].tolist() == [False, True, False]
    assert not out["in_d"][0].any()


@given(st.integers(0, 10**6), st.integers(2, 40))
def test_batched_protocol_always_valid(seed, W):
    rng = np.random.default_rng(seed)
    t = generate_topology(NetworkConfig(), rng)
    if t.is_empty:
        return
    masks = sample_decision_masks(t, ProtocolConfig(W=W), rng, 200)
    for row in masks:
        assert is_valid_decision_schedule(t, np.flatnonzero(row))


def test_parallel_update_singleton_matches_single_site():
    t = chain(4, spacing=2.0)
    state = ScheduleState({1, 3}, (500, 40, 70, 900))
    p = update_probability(0, state, t, WF)
    rng = np.random.default_rng(2)
    n = 20000
    hits = sum(0 in parallel_update(state, {0}, t, WF, rng).active_set for _ in range(n))
    assert abs(hits / n - p) < 4 * np.sqrt(p * (1 - p) / n)


def test_parallel_update_edge_cases():
    t = chain(5)
    state = ScheduleState({1, 2}, (5, 5, 5, 5, 5))
    assert parallel_update(state, set(), t, WF, np.random.default_rng(0)) == state
    with pytest.raises(ValueError):
        parallel_update(state, {0, 2}, t, WF, np.random.default_rng(0))
    new = parallel_update(state, {0, 3}, t, WF, np.random.default_rng(0))
    assert new.active_set & {1, 2, 4} == {1, 2}


def test_parallel_update_uses_common_snapshot():
    t = chain(7)
    q = (900, 800, 700, 600, 500, 400, 300)
    state = ScheduleState({1, 4}, q)
    D = {0, 3, 6}
    probs = {i: update_probability(i, state, t, WF) for i in D}
    rng = np.random.default_rng(5)
    n = 20000
    counts = {i: 0 for i in D}
    for _ in range(n):
        new = parallel_update(state, D, t, WF, rng)
        for i in D:
            counts[i] += i in new.active_set
    for i in D:
        assert abs(counts[i] / n - probs[i]) < 4 * np.sqrt(probs[i] * (1 - probs[i]) / n) + 1e-9


def test_decision_schedule_reproducible():
    t = generate_topology(NetworkConfig(), np.random.default_rng(4))
    a = run_decision_protocol(t, ProtocolConfig(), np.random.default_rng(11))
    b = run_decision_protocol(t, ProtocolConfig(), np.random.default_rng(11))
    assert a.members == b.members and a.trace.to_text() == b.trace.to_text()


def test_empty_topology_protocol():
    t = Topology.empty(NetworkConfig())
    assert run_decision_protocol(t, ProtocolConfig(), np.random.default_rng(0)).members == frozenset()
