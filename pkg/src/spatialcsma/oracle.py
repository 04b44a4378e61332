"""Exact small-instance computations for checking the CSMA chains.

Subsets of links are encoded as integers with link ``i`` on bit ``i``.
Kernels are assembled from the same update-probability functions the
simulator uses, so a defect in those functions shows up here.
"""
from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from .baseline import graph_activation_probability, graph_parallel_update_mask
from .glauber import WeightFunction, activation_probability
from .schedule import ProtocolConfig, parallel_update_mask, sample_decision_masks
from .topology import NetworkConfig, Topology

MAX_TABLE_LINKS = 16
MAX_KERNEL_LINKS = 12
MAX_MRF_LINKS = 10

ProbabilityFn = Callable[[np.ndarray, int, np.ndarray, Topology], float]


def _guard(n: int, limit: int, what: str) -> None:
    if n > limit:
        raise ValueError(f"{what} is limited to {limit} links, got {n}")


def subset_masks(n: int) -> np.ndarray:
    idx = np.arange(1 << n)
    return ((idx[:, None] >> np.arange(n)) & 1).astype(bool)


def subset_index(mask) -> int:
    return int(sum(1 << int(i) for i in np.flatnonzero(mask)))


def _weights(queues, wf: WeightFunction) -> np.ndarray:
    return np.atleast_1d(wf(np.asarray(queues, dtype=float)))


@dataclass(frozen=True, eq=False)
class DistributionTable:
    """Probability mass over all ``2^N`` subsets, indexed by subset encoding."""

    masses: np.ndarray
    log_Z: float = float("nan")

    @property
    def n_links(self) -> int:
        return int(len(self.masses)).bit_length() - 1

    def __getitem__(self, subset: int) -> float:
        return float(self.masses[subset])

    def argmax(self) -> frozenset:
        s = int(np.argmax(self.masses))
        return frozenset(i for i in range(self.n_links) if (s >> i) & 1)

    def to_text(self) -> str:
        lines = [f"# n_links = {self.n_links}", f"# log_Z = {self.log_Z!r}", "# columns: subset mass"]
        lines += [f"{s} {float(m)!r}" for s, m in enumerate(self.masses)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> DistributionTable:
        log_z = float("nan")
        masses = []
        for line in text.splitlines():
            if line.startswith("# log_Z"):
                log_z = float(line.split("=", 1)[1])
            elif line and not line.startswith("#"):
                s, m = line.split()
                if int(s) != len(masses):
                    raise ValueError("subset rows must be contiguous from 0")
                masses.append(float(m))
        return cls(np.array(masses), log_z)


@dataclass(frozen=True, eq=False)
class TransitionKernel:
    matrix: np.ndarray


def _normalize(log_w: np.ndarray) -> DistributionTable:
    top = log_w.max()
    w = np.exp(log_w - top)
    total = w.sum()
    return DistributionTable(w / total, float(top + np.log(total)))


def gibbs_energies(topology: Topology, queues, wf: WeightFunction) -> np.ndarray:
    """``sum_{j in M} mu_j(M) g(q_j)`` for every subset ``M`` (close-in rates)."""
    n = topology.n_links
    _guard(n, MAX_TABLE_LINKS, "subset enumeration")
    g = _weights(queues, wf)
    b = subset_masks(n).astype(float)
    mu = np.exp(b @ topology.log_gain_close.T)
    return (b * mu) @ g


def stationary_distribution(topology: Topology, queues, wf: WeightFunction) -> DistributionTable:
    return _normalize(gibbs_energies(topology, queues, wf))


def hardcore_distribution(topology: Topology, queues, wf: WeightFunction) -> DistributionTable:
    """Gibbs measure ``exp(sum_{i in M} g(q_i))`` on independent sets only."""
    n = topology.n_links
    _guard(n, MAX_TABLE_LINKS, "subset enumeration")
    g = _weights(queues, wf)
    b = subset_masks(n)
    conflicts = ((b.astype(np.int64) @ topology.adjacency.astype(np.int64)) > 0) & b
    log_w = np.where(conflicts.any(axis=1), -np.inf, b.astype(float) @ g)
    return _normalize(log_w)


def single_site_kernel(topology: Topology, queues, wf: WeightFunction,
                       prob_fn: ProbabilityFn = activation_probability) -> TransitionKernel:
    """Uniform-link Glauber kernel built from ``prob_fn``."""
    n = topology.n_links
    _guard(n, MAX_KERNEL_LINKS, "kernel construction")
    if n == 0:
        return TransitionKernel(np.ones((1, 1)))
    g = _weights(queues, wf)
    masks = subset_masks(n)
    P = np.zeros((1 << n, 1 << n))
    for s, mask in enumerate(masks):
        for i in range(n):
            p = prob_fn(mask, i, g, topology)
            on, off = s | (1 << i), s & ~(1 << i)
            P[s, on] += p / n
            P[s, off] += (1.0 - p) / n
    return TransitionKernel(P)


def graph_single_site_kernel(topology: Topology, queues, wf: WeightFunction) -> TransitionKernel:
    return single_site_kernel(topology, queues, wf, graph_activation_probability)


def stationarity_residual(pi: DistributionTable, P: TransitionKernel) -> float:
    """``||pi P - pi||_1``."""
    return float(np.abs(pi.masses @ P.matrix - pi.masses).sum())


def verify_detailed_balance(pi: DistributionTable, P: TransitionKernel) -> float:
    """Largest ``|pi(x) P(x, y) - pi(y) P(y, x)|`` over all state pairs."""
    flow = pi.masses[:, None] * P.matrix
    return float(np.abs(flow - flow.T).max())


def tv_distance(a, b) -> float:
    a = a.masses if isinstance(a, DistributionTable) else np.asarray(a, dtype=float)
    b = b.masses if isinstance(b, DistributionTable) else np.asarray(b, dtype=float)
    return 0.5 * float(np.abs(a - b).sum())


def empirical_distribution(runner: Callable[[int], np.ndarray], slots: int, burn_in: int,
                           n_links: int) -> DistributionTable:
    """Visit frequencies of a chain after discarding ``burn_in`` slots.

    ``runner(slots)`` must return the subset index occupied after each slot.
    """
    if slots <= burn_in:
        raise ValueError("slots must exceed burn_in")
    visited = np.asarray(runner(slots))[burn_in:]
    counts = np.bincount(visited, minlength=1 << n_links)
    return DistributionTable(counts / counts.sum())


def _track(n: int, masks_fn, slots: int) -> np.ndarray:
    weights = 1 << np.arange(n)
    out = np.empty(slots, dtype=np.int64)
    for t, mask in enumerate(masks_fn(slots)):
        out[t] = int(weights[mask].sum())
    return out


def single_site_chain(topology: Topology, queues, wf: WeightFunction, rng: np.random.Generator,
                      initial=None, prob_fn: ProbabilityFn = activation_probability):
    """Runner for :func:`empirical_distribution`: uniform link, one update per slot."""
    n = topology.n_links
    g = _weights(queues, wf)

    def run(slots):
        mask = np.zeros(n, dtype=bool) if initial is None else np.array(initial, dtype=bool)
        state = subset_index(mask)
        picks = rng.integers(n, size=slots)
        coins = rng.random(slots)
        out = np.empty(slots, dtype=np.int64)
        for t in range(slots):
            i = picks[t]
            on = coins[t] < prob_fn(mask, i, g, topology)
            mask[i] = on
            # only bit i can change
            state = state | (1 << i) if on else state & ~(1 << i)
            out[t] = state
        return out

    return run


def parallel_chain(topology: Topology, queues, wf: WeightFunction, pc: ProtocolConfig,
                   rng: np.random.Generator, initial=None, graph: bool = False, batch: int = 8192):
    """Runner: a fresh protocol-drawn decision schedule updates in parallel each slot."""
    n = topology.n_links
    g = _weights(queues, wf)
    update = graph_parallel_update_mask if graph else parallel_update_mask

    def masks(slots):
        mask = np.zeros(n, dtype=bool) if initial is None else np.array(initial, dtype=bool)
        done = 0
        while done < slots:
            block = sample_decision_masks(topology, pc, rng, min(batch, slots - done))
            for d in block:
                mask = update(mask, np.flatnonzero(d), g, topology, rng)
                yield mask
            done += len(block)

    return lambda slots: _track(n, masks, slots)


def mrf_conditional_check(topology: Topology, queues, wf: WeightFunction,
                          prob_fn: ProbabilityFn = activation_probability) -> float:
    """Largest change in a link's update probability between configurations
    that agree on that link's two-hop closure. Exhaustive over ``2^N`` states.
    """
    n = topology.n_links
    _guard(n, MAX_MRF_LINKS, "MRF check")
    g = _weights(queues, wf)
    masks = subset_masks(n)
    worst = 0.0
    for i in range(n):
        closure = topology.two_hop[i]
        seen: dict[bytes, list[float]] = {}
        for mask in masks:
            key = mask[closure].tobytes()
            p = prob_fn(mask, i, g, topology)
            lo_hi = seen.setdefault(key, [p, p])
            lo_hi[0] = min(lo_hi[0], p)
            lo_hi[1] = max(lo_hi[1], p)
        for lo, hi in seen.values():
            worst = max(worst, hi - lo)
    return worst


def max_weight_schedule(topology: Topology, queues, wf: WeightFunction) -> frozenset:
    """Exhaustive argmax of ``sum_{j in M} mu_j(M) g(q_j)``; ties go to the lowest encoding."""
    energies = gibbs_energies(topology, queues, wf)
    s = int(np.argmax(energies))
    return frozenset(i for i in range(topology.n_links) if (s >> i) & 1)


def random_small_topology(n: int, rng: np.random.Generator, side_length: float = 6.0,
                          **config) -> Topology:
    """``n`` uniform links on a square small enough that most pairs interact."""
    cfg = NetworkConfig(side_length=side_length, **config)
    return Topology.from_positions(rng.uniform(0, side_length, size=(n, 2)), cfg,
                                   rng.uniform(0, 2 * np.pi, size=n))


def line_topology(n: int, spacing: float, **config) -> Topology:
    """Links on a horizontal line; with ``spacing`` just under the close-in
    radius this is a path graph."""
    cfg = NetworkConfig(**config)
    return Topology.from_positions([(k * spacing, 0.0) for k in range(n)], cfg)

