import math
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from spatialcsma.channel import (ALL_LINKS, CLOSE_IN, binomial_sigma, draw_fading, enumerate_rate_vectors,
                                 rate_vector, rates_from_mask, realized_success, realized_successes,
                                 required_pairs, success_probability)
from spatialcsma.oracle import random_small_topology
from spatialcsma.topology import NetworkConfig, Topology, gain_factor

from conftest import scattered


def _topo(seed, n, side=8.0):
    rng = np.random.default_rng(seed)
    return Topology.from_positions(rng.uniform(0, side, size=(n, 2)), NetworkConfig())


def test_alone_succeeds_with_probability_one(reference17):
    for mode in (CLOSE_IN, ALL_LINKS):
        assert success_probability(reference17, {3}, 3, mode) == 1.0


def test_single_interferer_is_one_factor():
    t = scattered([(0, 0), (2, 0)])
    assert success_probability(t, {0, 1}, 0) == gain_factor(2.0, t.config)


def test_product_matches_loop_oracle():
    t = _topo(4, 6)
    members = [0, 2, 3, 5]
    for i in members:
        expected = 1.0
        for j in members:
            if j != i and t.distances[i, j] <= t.config.close_in_radius:
                expected *= 1.0 / (1.0 + (0.25 / t.distances[i, j]) ** 2.5 * 10 ** 1.7)
        assert abs(success_probability(t, members, i, CLOSE_IN) - expected) < 1e-15


def test_not_active_is_an_error(reference17):
    with pytest.raises(ValueError):
        success_probability(reference17, {1, 2}, 0)
    with pytest.raises(ValueError):
        success_probability(reference17, {0}, 0, "nearby")


def test_rate_vector_zero_fill_exhaustive():
    t = _topo(1, 4, side=5.0)
    for s, vec in enumerate_rate_vectors(t, CLOSE_IN):
        members = [i for i in range(4) if (s >> i) & 1]
        for i in range(4):
            if i in members:
                assert vec[i] == pytest.approx(success_probability(t, members, i), rel=1e-14)
                if not (set(members) & t.neighbour_sets[i]):
                    assert vec[i] == 1.0
            else:
                assert vec[i] == 0.0
    assert sum(1 for _ in enumerate_rate_vectors(t)) == 16


def test_rate_vector_far_apart_all_ones():
    t = scattered([(0, 0), (10, 0), (0, 10), (10, 10)])
    np.testing.assert_array_equal(rate_vector(t, range(4), CLOSE_IN), np.ones(4))
    np.testing.assert_array_equal(rate_vector(t, [], ALL_LINKS), np.zeros(4))


def test_enumeration_refuses_large(reference17):
    with pytest.raises(ValueError):
        next(enumerate_rate_vectors(reference17, max_links=16))


@given(st.integers(0, 5000), st.data())
def test_monotone_and_mode_dominance(seed, data):
    t = _topo(seed, 7, side=10.0)
    m_prime = data.draw(st.sets(st.integers(0, 6), min_size=1))
    m = data.draw(st.sets(st.sampled_from(sorted(m_prime)), min_size=1))
    i = data.draw(st.sampled_from(sorted(m)))
    for mode in (CLOSE_IN, ALL_LINKS):
        assert success_probability(t, m_prime, i, mode) <= success_probability(t, m, i, mode) + 1e-15
    close = success_probability(t, m_prime, i, CLOSE_IN)
    full = success_probability(t, m_prime, i, ALL_LINKS)
    assert close >= full
    if all(t.distances[i, j] <= t.config.close_in_radius for j in m_prime if j != i):
        assert close == pytest.approx(full, rel=1e-14)


def test_fading_mean_and_determinism():
    draw = draw_fading(np.random.default_rng(0), [(0, 0)])
    assert set(draw) == {(0, 0)}
    rng = np.random.default_rng(42)
    samples = rng.exponential(1.0, size=10**6)
    assert 0.997 <= samples.mean() <= 1.003
    many = [draw_fading(np.random.default_rng(7), [(0, 1), (1, 0)]) for _ in range(2)]
    assert many[0] == many[1]
    assert draw_fading(np.random.default_rng(1), []) == {}


def test_fading_draw_helper_mean():
    rng = np.random.default_rng(3)
    vals = [draw_fading(rng, [(0, 0), (0, 1)]) for _ in range(20000)]
    mean = np.mean([v[(0, 1)] for v in vals])
    assert abs(mean - 1.0) < 4 / math.sqrt(20000)


def test_realized_alone_and_missing_pair(reference17):
    assert realized_success(reference17, {2}, 2, {(2, 2): 1e-9})
    with pytest.raises(ValueError):
        realized_success(reference17, {2, 3}, 2, {(2, 2): 1.0})


def test_realized_single_interferer_rearrangement():
    t = scattered([(0, 0), (1.5, 0)])
    cfg = t.config
    h_ii = 0.8
    bound = h_ii * (1.5 / cfg.link_distance) ** cfg.path_loss_alpha / cfg.sir_threshold
    assert realized_success(t, {0, 1}, 0, {(0, 0): h_ii, (0, 1): bound * (1 - 1e-9)})
    assert not realized_success(t, {0, 1}, 0, {(0, 0): h_ii, (0, 1): bound * (1 + 1e-9)})


def test_monte_carlo_matches_all_links_formula():
    rng = np.random.default_rng(2024)
    n_draws = 10**5
    for case in range(20):
        t = _topo(100 + case, 6, side=6.0)
        members = sorted(rng.choice(6, size=rng.integers(2, 7), replace=False).tolist())
        i = int(rng.choice(members))
        pairs = required_pairs(members, i)
        cfg = t.config
        h = rng.exponential(1.0, size=(n_draws, len(pairs)))
        # same test as realized_success, vectorized over draws
        signal = h[:, 0] * cfg.link_distance ** -cfg.path_loss_alpha
        interf = sum(h[:, k] * t.distances[i, j] ** -cfg.path_loss_alpha for k, (_, j) in enumerate(pairs) if k)
        freq = float((signal >= cfg.sir_threshold * interf).mean())
        p = success_probability(t, members, i, ALL_LINKS)
        assert abs(freq - p) <= 3 * binomial_sigma(p, n_draws) + 1e-12
        assert abs(freq - p) <= 0.01
        if case < 3:
            scalar = np.mean([realized_success(t, members, i, draw_fading(rng, pairs)) for _ in range(3000)])
            assert abs(scalar - p) < 4 * binomial_sigma(p, 3000) + 1e-9


@pytest.mark.parametrize("mode", [CLOSE_IN, ALL_LINKS])
def test_vectorized_realized_frequencies(mode):
    t = random_small_topology(5, np.random.default_rng(8), side_length=9.0)
    mask = np.array([True, True, False, True, True])
    rng = np.random.default_rng(1)
    n = 40000
    hits = np.zeros(5)
    for _ in range(n):
        hits += realized_successes(t, mask, rng, mode)
    mu = rates_from_mask(t, mask, mode)
    for i in range(5):
        assert abs(hits[i] / n - mu[i]) <= 4 * binomial_sigma(mu[i], n) + 1e-12
    assert not realized_successes(t, np.zeros(5, bool), rng, mode).any()
    with pytest.raises(ValueError):
        realized_successes(t, mask, rng, "nearby")


def test_binomial_sigma():
    assert binomial_sigma(0.5, 100) == pytest.approx(0.05)
    assert binomial_sigma(1.0, 10) == 0.0


def test_pairs_are_sorted_and_complete():
    assert required_pairs({3, 1, 2}, 2) == [(2, 2), (2, 1), (2, 3)]
    assert all(len(required_pairs(c, c[0])) == len(c) for c in combinations(range(5), 3))
