"""Single-site spatial CSMA update.

A chosen link ``i`` turns on with probability

    p = exp(w_i^1) / (exp(sum_{j in M_i} (w_j^0 - w_j^1)) + exp(w_i^1))

where ``M_i`` are its currently active neighbours, ``w_j^0`` is neighbour
``j``'s queue weight times its success probability with ``i`` off, and
``w_j^1 = w_j^0 f_ij`` the same with ``i`` on. This is the conditional law of
the Gibbs measure ``exp(sum_{j in M} mu_j(M) g(q_j))`` given every other link,
so the chain is a Glauber dynamics for that measure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .topology import Topology

LOG01X = "log01x"
LOGLOG = "loglog"


@dataclass(frozen=True)
class WeightFunction:
    """Queue-length weight ``g``.

    ``log01x`` is ``log(0.1 * max(q, 1))`` and ``loglog`` is
    ``log(log(q + e))``; both are clamped below at ``floor`` so that empty
    queues keep a finite weight.
    """

    kind: str = LOG01X
    floor: float = math.log(0.1)

    def __post_init__(self):
        if self.kind not in (LOG01X, LOGLOG):
            raise ValueError(f"unknown weight function {self.kind!r}")
        if not math.isfinite(self.floor):
            raise ValueError("floor must be finite")

    def __call__(self, q):
        q = np.asarray(q, dtype=float)
        if np.any(q < 0):
            raise ValueError("queue lengths must be non-negative")
        val = self.unchecked(q)
        return float(val) if val.ndim == 0 else val

    def unchecked(self, q: np.ndarray) -> np.ndarray:
        """Vector evaluation without validation, for the simulation loop."""
        if self.kind == LOG01X:
            val = np.log(0.1 * np.maximum(q, 1.0))
        else:
            val = np.log(np.log(q + math.e))
        return np.maximum(val, self.floor)


def weight_g(q, wf: WeightFunction):
    return wf(q)


@dataclass(frozen=True)
class ScheduleState:
    active_set: frozenset
    queues: tuple

    def __post_init__(self):
        object.__setattr__(self, "active_set", frozenset(int(i) for i in self.active_set))
        object.__setattr__(self, "queues", tuple(int(q) for q in self.queues))
        if any(q < 0 for q in self.queues):
            raise ValueError("queues must be non-negative")
        if any(not 0 <= i < len(self.queues) for i in self.active_set):
            raise ValueError("active set refers to unknown links")

    @classmethod
    def initial(cls, n_links: int, active=()) -> ScheduleState:
        return cls(frozenset(active), (0,) * n_links)

    def mask(self) -> np.ndarray:
        m = np.zeros(len(self.queues), dtype=bool)
        m[list(self.active_set)] = True
        return m


def logistic(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def activation_logit(mask: np.ndarray, i: int, g: np.ndarray, topology: Topology) -> float:
    """``w_i^1 - sum_{j in M_i} (w_j^0 - w_j^1)`` for link ``i``.

    ``mask`` is the previous active set, ``g`` the per-link weights. Only the
    statuses of ``i``'s two-hop closure are read. All simulation paths and
    the exact kernels call this function.
    """
    nbr = topology.neighbour_index[i]
    act = nbr[mask[nbr]]
    f_i = topology.gain[i, act]
    w_i1 = g[i] * float(np.prod(f_i))
    if len(act) == 0:
        return w_i1
    others = mask.astype(float)
    others[i] = 0.0
    mu0 = np.exp(topology.log_gain_close[act] @ others)
    w0 = g[act] * mu0
    w1 = w0 * f_i
    return w_i1 - float(np.sum(w0 - w1))


def activation_probability(mask: np.ndarray, i: int, g: np.ndarray, topology: Topology) -> float:
    return logistic(activation_logit(mask, i, g, topology))


def _weights(state: ScheduleState, wf: WeightFunction) -> np.ndarray:
    return np.atleast_1d(wf(np.asarray(state.queues, dtype=float)))


def inactive_weight(j: int, state: ScheduleState, i: int, topology: Topology, wf: WeightFunction) -> float:
    """``w_j^0`` for neighbour ``j`` of the updating link ``i``.

    The success probability is the rate ``j`` would get transmitting against
    ``M(t-1) \\ {i}``, whether or not ``j`` is itself active.
    """
    if j not in topology.neighbour_sets[i]:
        raise ValueError(f"link {j} is not a neighbour of link {i}")
    others = state.mask().astype(float)
    others[i] = 0.0
    others[j] = 0.0
    mu = math.exp(float(topology.log_gain_close[j] @ others))
    return float(wf(state.queues[j])) * mu


def active_weight(j: int, state: ScheduleState, i: int, topology: Topology, wf: WeightFunction) -> float:
    """``w_j^1``; for ``j == i`` this is ``g(q_i) mu_i(M(t-1) + {i})``."""
    if j == i:
        mask = state.mask()
        act = [k for k in topology.neighbour_index[i] if mask[k]]
        return float(wf(state.queues[i])) * float(np.prod(topology.gain[i, act]))
    return inactive_weight(j, state, i, topology, wf) * float(topology.gain[i, j])


def update_probability(i: int, state: ScheduleState, topology: Topology, wf: WeightFunction) -> float:
    return activation_probability(state.mask(), i, _weights(state, wf), topology)


def single_site_update(state: ScheduleState, i: int, topology: Topology, wf: WeightFunction,
                       rng: np.random.Generator) -> ScheduleState:
    p = update_probability(i, state, topology, wf)
    if rng.random() < p:
        active = state.active_set | {i}
    else:
        active = state.active_set - {i}
    return ScheduleState(active, state.queues)


def pick_uniform_link(topology: Topology, rng: np.random.Generator) -> int:
    if topology.n_links == 0:
        raise ValueError("cannot pick a link from an empty topology")
    return int(rng.integers(topology.n_links))
