"""Slotted queueing simulations of spatial CSMA and the conflict-graph baseline.

Each slot runs three phases in a fixed order: the control slot updates the
schedule, the data slot serves one packet per successful transmission, then
Bernoulli arrivals join the queues. Packets arriving in slot ``t`` can
therefore be served at ``t + 1`` at the earliest.

Randomness is split into independent streams (control, protocol, service,
arrivals) spawned from one seed, so two runs that differ only in the model
still see identical arrivals.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import channel
from .baseline import (ANALYTIC, DETERMINISTIC, REALIZED_SIR, graph_activation_probability,
                       graph_parallel_update_mask, graph_service)
from .glauber import WeightFunction, activation_probability
from .schedule import ProtocolConfig, parallel_update_mask, sample_decision_masks
from .topology import NetworkConfig, Topology

log = logging.getLogger(__name__)

SIR, GRAPH = "sir", "graph"
SINGLE, PARALLEL = "single", "parallel"
REALIZED = "realized"
SERVICE_MODES = {SIR: (ANALYTIC, REALIZED), GRAPH: (ANALYTIC, REALIZED, DETERMINISTIC)}

_CHUNK = 4096
# smallest total-queue growth (packets per slot) reported as a trend
MIN_TREND = 1e-3


@dataclass(frozen=True)
class RunSpec:
    model: str = SIR
    update_mode: str = SINGLE
    service_mode: str = REALIZED
    interference: str = channel.ALL_LINKS
    arrival_rate: float | tuple = 0.2
    horizon: int = 200_000
    seed: int = 0
    network: NetworkConfig = field(default_factory=NetworkConfig)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    weight: WeightFunction = field(default_factory=WeightFunction)
    initial_queue: int = 0

    def __post_init__(self):
        if self.model not in SERVICE_MODES:
            raise ValueError(f"unknown model {self.model!r}")
        if self.update_mode not in (SINGLE, PARALLEL):
            raise ValueError(f"unknown update mode {self.update_mode!r}")
        if self.service_mode not in SERVICE_MODES[self.model]:
            raise ValueError(f"service mode {self.service_mode!r} is not available for the {self.model} model")
        if self.interference not in channel.MODES:
            raise ValueError(f"unknown interference scope {self.interference!r}")
        rates = np.atleast_1d(np.asarray(self.arrival_rate, dtype=float))
        if np.any(rates < 0) or np.any(rates >= 1):
            raise ValueError("arrival rates must lie in [0, 1)")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.initial_queue < 0:
            raise ValueError("initial_queue must be non-negative")

    def rates(self, n_links: int) -> np.ndarray:
        rates = np.atleast_1d(np.asarray(self.arrival_rate, dtype=float))
        if rates.size == 1:
            return np.full(n_links, float(rates[0]))
        if rates.size != n_links:
            raise ValueError(f"{rates.size} arrival rates for {n_links} links")
        return rates


@dataclass(eq=False)
class MetricsSeries:
    """Per-slot and per-link records of one run.

    ``total_queue[t]`` is the total backlog after slot ``t``; entry 0 is the
    initial backlog. ``success_gap`` is the mean over transmitters of the
    close-in success probability minus the all-links one (NaN when idle).
    """

    total_queue: np.ndarray
    queue_sum: np.ndarray
    arrivals: np.ndarray
    departures: np.ndarray
    initial_queues: np.ndarray
    final_queues: np.ndarray
    schedule_sizes: np.ndarray
    success_gap: np.ndarray

    @property
    def horizon(self) -> int:
        return len(self.total_queue) - 1

    @property
    def mean_link_queue(self) -> np.ndarray:
        """Per-link time-averaged queue over the whole run."""
        return self.queue_sum / self.horizon


class Simulation:
    def __init__(self, spec: RunSpec, topology: Topology):
        if topology.is_empty:
            raise ValueError("cannot simulate an empty topology")
        self.spec = spec
        self.topology = topology
        n = topology.n_links
        self.n = n
        streams = np.random.SeedSequence(spec.seed).spawn(4)
        self.rng_control, self.rng_protocol, self.rng_service, self.rng_arrival = (
            np.random.default_rng(s) for s in streams)
        self.rates = spec.rates(n)
        self.mask = np.zeros(n, dtype=bool)
        self.queues = np.full(n, spec.initial_queue, dtype=np.int64)
        self.t = 0
        if spec.model == SIR:
            self._prob = activation_probability
            self._parallel = parallel_update_mask
        else:
            self._prob = graph_activation_probability
            self._parallel = graph_parallel_update_mask
        self._buf_pos = _CHUNK
        self._arrivals_buf = None
        self._picks = self._coins = self._schedules = None

    def _refill(self):
        n = self.n
        self._arrivals_buf = self.rng_arrival.random((_CHUNK, n)) < self.rates
        if self.spec.update_mode == SINGLE:
            self._picks = self.rng_control.integers(n, size=_CHUNK)
            self._coins = self.rng_control.random(_CHUNK)
        else:
            masks = sample_decision_masks(self.topology, self.spec.protocol, self.rng_protocol, _CHUNK)
            self._schedules = [np.flatnonzero(m) for m in masks]
        self._buf_pos = 0

    def control(self, g: np.ndarray) -> int:
        k = self._buf_pos
        if self.spec.update_mode == SINGLE:
            i = self._picks[k]
            self.mask[i] = self._coins[k] < self._prob(self.mask, i, g, self.topology)
            return 1
        members = self._schedules[k]
        self.mask = self._parallel(self.mask, members, g, self.topology, self.rng_control)
        return len(members)

    def service(self, transmitters: np.ndarray) -> np.ndarray:
        mode, scope = self.spec.service_mode, self.spec.interference
        if mode == REALIZED:
            return channel.realized_successes(self.topology, transmitters, self.rng_service, scope)
        if mode == ANALYTIC:
            mu = channel.rates_from_mask(self.topology, transmitters, scope)
            return transmitters & (self.rng_service.random(self.n) < mu)
        return graph_service(self.topology, transmitters, mode, self.rng_service)

    def success_gap(self, transmitters: np.ndarray) -> float:
        if not transmitters.any():
            return float("nan")
        close = channel.rates_from_mask(self.topology, transmitters, channel.CLOSE_IN)
        full = channel.rates_from_mask(self.topology, transmitters, channel.ALL_LINKS)
        return float((close - full)[transmitters].mean())

    def run(self, slots: int | None = None, record_gap: bool = True) -> MetricsSeries:
        slots = self.spec.horizon if slots is None else slots
        n = self.n
        wf = self.spec.weight
        total = np.empty(slots + 1, dtype=np.int64)
        total[0] = self.queues.sum()
        queue_sum = np.zeros(n, dtype=np.int64)
        arrivals = np.zeros(n, dtype=np.int64)
        departures = np.zeros(n, dtype=np.int64)
        sizes = np.empty(slots, dtype=np.int64)
        gap = np.full(slots, np.nan)
        q0 = self.queues.copy()
        for t in range(slots):
            if self._buf_pos >= _CHUNK:
                self._refill()
            g = wf.unchecked(self.queues)
            sizes[t] = self.control(g)
            # an empty queue has nothing to send and does not interfere
            tx = self.mask & (self.queues > 0)
            if tx.any():
                ok = self.service(tx)
                self.queues -= ok
                departures += ok
                if record_gap:
                    gap[t] = self.success_gap(tx)
            new = self._arrivals_buf[self._buf_pos]
            self.queues += new
            arrivals += new
            self._buf_pos += 1
            queue_sum += self.queues
            total[t + 1] = self.queues.sum()
            self.t += 1
        return MetricsSeries(total, queue_sum, arrivals, departures, q0, self.queues.copy(), sizes, gap)


def simulate(spec: RunSpec, topology: Topology, record_gap: bool = True) -> MetricsSeries:
    return Simulation(spec, topology).run(record_gap=record_gap)


def trend_slope(series: np.ndarray, blocks: int = 10) -> tuple[float, float]:
    """Least-squares slope (packets per slot) of block means and its standard error.

    Block means damp the short-range correlation of queue trajectories.
    """
    series = np.asarray(series, dtype=float)
    usable = len(series) - len(series) % blocks
    if usable < blocks or blocks < 3:
        return 0.0, float("inf")
    means = series[:usable].reshape(blocks, -1).mean(axis=1)
    width = usable // blocks
    x = (np.arange(blocks) + 0.5) * width
    xc = x - x.mean()
    slope = float(xc @ (means - means.mean()) / (xc @ xc))
    resid = means - means.mean() - slope * xc
    se = float(np.sqrt(resid @ resid / (blocks - 2) / (xc @ xc)))
    return slope, se


@dataclass(frozen=True)
class RunSummary:
    rate: float
    replication: int
    seed: int
    topology: str
    mean_total_queue: float
    mean_link_queue: float
    trend_slope: float
    trend_se: float
    unstable: bool


def summarize(metrics: MetricsSeries, rate: float, replication: int, seed: int, topology: Topology,
              sigmas: float = 3.0) -> RunSummary:
    """Averages and queue trend over the final half of the run.

    The per-run flag marks a slope positive by more than ``sigmas`` block
    standard errors and above 1e-3 packets per slot. Block errors of a single
    trajectory are rough; :func:`aggregate` gives the verdict that counts.
    """
    h = metrics.horizon
    tail = metrics.total_queue[1 + h // 2:]
    mean_total = float(tail.mean())
    slope, se = trend_slope(tail, blocks=20)
    unstable = slope > sigmas * se and slope > MIN_TREND
    return RunSummary(rate, replication, seed, topology.fingerprint(), mean_total,
                      mean_total / topology.n_links, slope, se, bool(unstable))


def replication_seed(master_seed: int, index: int) -> int:
    """Independent per-run seed derived from ``(master_seed, index)``."""
    return int(np.random.SeedSequence([master_seed, index]).generate_state(1, dtype=np.uint64)[0] >> 1)


def _sweep_job(args):
    spec, topology, rate, rep = args
    run_spec = replace(spec, arrival_rate=rate, seed=replication_seed(spec.seed, rep))
    metrics = simulate(run_spec, topology, record_gap=False)
    return summarize(metrics, rate, rep, run_spec.seed, topology)


def run_sweep(spec: RunSpec, topology: Topology, rates, replications: int = 5,
              workers: int | None = 1) -> list[RunSummary]:
    """One simulation per (rate, replication); rows ordered by rate then replication.

    All replications share ``topology``; each gets its own dynamics seed.
    ``workers`` > 1 runs them in separate processes, which does not change
    any result.
    """
    rates = [float(r) for r in rates]
    if not rates:
        raise ValueError("rate grid is empty")
    if replications < 1:
        raise ValueError("replications must be at least 1")
    jobs = [(spec, topology, r, k) for r in rates for k in range(replications)]
    if workers is not None and workers <= 1:
        return [_sweep_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_job, jobs))


def stability_verdict(slopes, sigmas: float = 3.0) -> tuple[bool, float]:
    """Across-replication test of a positive queue trend.

    Returns ``(unstable, t)`` where ``t`` is the mean final-half slope over its
    standard error across replications. Fewer than three replications fall
    back to a majority of the per-run flags, signalled by ``t = nan``.
    """
    slopes = np.asarray(slopes, dtype=float)
    if len(slopes) < 3:
        return False, float("nan")
    sd = slopes.std(ddof=1)
    mean = slopes.mean()
    if sd == 0:
        t = 0.0 if mean == 0 else float(np.copysign(np.inf, mean))
    else:
        t = float(mean / (sd / np.sqrt(len(slopes))))
    return bool(t > sigmas and mean > MIN_TREND), t


def aggregate(rows: list[RunSummary], sigmas: float = 3.0) -> dict[float, dict[str, float]]:
    """Per-rate mean and spread of the run averages, and the stability verdict."""
    out = {}
    for rate in sorted({r.rate for r in rows}):
        sel = [r for r in rows if r.rate == rate]
        totals = np.array([r.mean_total_queue for r in sel])
        links = np.array([r.mean_link_queue for r in sel])
        slopes = np.array([r.trend_slope for r in sel])
        unstable, t = stability_verdict(slopes, sigmas)
        flagged = sum(r.unstable for r in sel)
        if np.isnan(t):
            unstable = 2 * flagged > len(sel)
        out[rate] = {
            "mean_total_queue": float(totals.mean()),
            "std_total_queue": float(totals.std(ddof=1)) if len(sel) > 1 else 0.0,
            "mean_link_queue": float(links.mean()),
            "trend_slope": float(slopes.mean()),
            "trend_t": t,
            "unstable": bool(unstable),
            "unstable_runs": flagged,
            "replications": len(sel),
        }
    return out


def run_convergence(spec: RunSpec, topology: Topology, horizon: int | None = None) -> dict[str, np.ndarray]:
    """Total-queue trajectories of both models on one topology with one seed.

    The SIR run uses ``spec`` as given; the graph run swaps the model and uses
    deterministic conflict-graph service. Arrivals are identical in both.
    """
    horizon = spec.horizon if horizon is None else horizon
    sir_spec = replace(spec, model=SIR, horizon=horizon,
                       service_mode=spec.service_mode if spec.service_mode != DETERMINISTIC else REALIZED)
    graph_spec = replace(spec, model=GRAPH, horizon=horizon, service_mode=DETERMINISTIC)
    return {
        SIR: simulate(sir_spec, topology, record_gap=False).total_queue,
        GRAPH: simulate(graph_spec, topology, record_gap=False).total_queue,
    }


def settling_time(series: np.ndarray, tolerance: float = 0.1, window: int = 1) -> int:
    """First slot at which ``series`` (optionally a trailing moving average of
    ``window`` slots) is within ``tolerance`` (relative) of its final-quarter mean.

    Returns ``len(series)`` if it never gets there.
    """
    series = np.asarray(series, dtype=float)
    n = len(series)
    if window < 1:
        raise ValueError("window must be at least 1")
    target = series[(3 * n) // 4:].mean()
    smooth = np.convolve(series, np.ones(window) / window, mode="valid")
    hits = np.flatnonzero(np.abs(smooth - target) <= tolerance * target)
    return int(hits[0]) + window - 1 if len(hits) else n
