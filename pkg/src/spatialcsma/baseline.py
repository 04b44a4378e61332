"""Conflict-graph CSMA used as the comparator.

Links are vertices, neighbours within the close-in radius share an edge and
the schedule is always an independent set. The chain is the hard-core
Glauber dynamics with activation weight ``exp(g(q_i))``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import channel
from .glauber import WeightFunction, logistic
from .topology import Topology

DETERMINISTIC = "deterministic"
REALIZED_SIR = "realized-sir"
ANALYTIC = "analytic"


def is_independent(topology: Topology, active) -> bool:
    members = sorted(set(active))
    return not topology.adjacency[np.ix_(members, members)].any()


@dataclass(frozen=True)
class GraphScheduleState:
    active_set: frozenset
    queues: tuple

    def __post_init__(self):
        object.__setattr__(self, "active_set", frozenset(int(i) for i in self.active_set))
        object.__setattr__(self, "queues", tuple(int(q) for q in self.queues))

    def mask(self) -> np.ndarray:
        m = np.zeros(len(self.queues), dtype=bool)
        m[list(self.active_set)] = True
        return m


def graph_activation_probability(mask: np.ndarray, i: int, g: np.ndarray, topology: Topology) -> float:
    nbr = topology.neighbour_index[i]
    if mask[nbr].any():
        return 0.0
    return logistic(float(g[i]))


def graph_single_site_update(state: GraphScheduleState, i: int, topology: Topology, wf: WeightFunction,
                             rng: np.random.Generator) -> GraphScheduleState:
    if not is_independent(topology, state.active_set):
        raise ValueError("state is not an independent set of the conflict graph")
    g = np.atleast_1d(wf(np.asarray(state.queues, dtype=float)))
    p = graph_activation_probability(state.mask(), i, g, topology)
    # a coin is drawn even when p == 0 so both models consume the RNG alike
    if rng.random() < p:
        active = state.active_set | {i}
    else:
        active = state.active_set - {i}
    return GraphScheduleState(active, state.queues)


def graph_parallel_update_mask(mask: np.ndarray, members, g: np.ndarray, topology: Topology,
                               rng: np.random.Generator) -> np.ndarray:
    """Simultaneous hard-core updates; members must be pairwise non-adjacent."""
    members = list(members)
    if not members:
        return mask.copy()
    probs = [graph_activation_probability(mask, i, g, topology) for i in members]
    coins = rng.random(len(members))
    new = mask.copy()
    new[members] = coins < np.asarray(probs)
    return new


def graph_service(topology: Topology, transmitters: np.ndarray, mode: str = DETERMINISTIC,
                  rng: np.random.Generator | None = None) -> np.ndarray:
    """Boolean mask of successful transmissions in one data slot.

    ``deterministic`` follows conflict-graph semantics, so every transmitter
    succeeds. ``realized-sir`` draws fading and applies the SIR test against
    all transmitters; ``analytic`` flips one coin per link with the all-links
    success probability.
    """
    transmitters = np.asarray(transmitters, dtype=bool)
    if mode == DETERMINISTIC:
        return transmitters.copy()
    if rng is None:
        raise ValueError(f"service mode {mode!r} needs an RNG")
    if mode == REALIZED_SIR:
        return channel.realized_successes(topology, transmitters, rng)
    if mode == ANALYTIC:
        mu = channel.rates_from_mask(topology, transmitters, channel.ALL_LINKS)
        return transmitters & (rng.random(topology.n_links) < mu)
    raise ValueError(f"unknown service mode {mode!r}")
