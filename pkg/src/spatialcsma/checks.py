"""Oracle checks shared by the ``verify`` command and the acceptance tests.

Each check returns a :class:`CheckResult` with the measured value and the
threshold it was held to, so callers can print or assert on it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import oracle
from .glauber import WeightFunction
from .schedule import ProtocolConfig, valid_schedule_masks, protocol_from_backoffs
from .topology import NetworkConfig, Topology, generate_topology


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.detail}"


def small_instance(n: int = 5, seed: int = 0, queue_max: int = 1000) -> tuple[Topology, np.ndarray]:
    """Random ``n``-link instance with frozen queues drawn from ``[1, queue_max]``."""
    rng = np.random.default_rng(seed)
    topology = oracle.random_small_topology(n, rng)
    queues = rng.integers(1, queue_max + 1, size=n)
    return topology, queues


def exact_stationarity(instances: int = 20, sizes=range(2, 7), seed: int = 0, queue_max: int = 10**4,
                       wf: WeightFunction | None = None, tol_stationary: float = 1e-10,
                       tol_balance: float = 1e-12) -> CheckResult:
    """``|Pi P - Pi|_1`` and detailed balance on random instances, exactly."""
    wf = wf or WeightFunction()
    sizes = list(sizes)
    rng = np.random.default_rng(seed)
    worst_stat = worst_bal = 0.0
    for k in range(instances):
        n = sizes[k % len(sizes)]
        topology = oracle.random_small_topology(n, rng)
        queues = rng.integers(1, queue_max + 1, size=n)
        pi = oracle.stationary_distribution(topology, queues, wf)
        P = oracle.single_site_kernel(topology, queues, wf)
        worst_stat = max(worst_stat, oracle.stationarity_residual(pi, P))
        worst_bal = max(worst_bal, oracle.verify_detailed_balance(pi, P))
    ok = worst_stat < tol_stationary and worst_bal < tol_balance
    detail = (f"{instances} instances, max |Pi P - Pi|_1 = {worst_stat:.2e} (< {tol_stationary:g}), "
              f"max balance residual = {worst_bal:.2e} (< {tol_balance:g})")
    return CheckResult("stationarity-exact", ok, max(worst_stat, worst_bal), tol_stationary, detail)


def empirical_single_site(topology: Topology, queues, updates: int = 10**6, burn_in: int = 10**5,
                          seed: int = 1, tol: float = 0.02, wf: WeightFunction | None = None) -> CheckResult:
    wf = wf or WeightFunction()
    pi = oracle.stationary_distribution(topology, queues, wf)
    runner = oracle.single_site_chain(topology, queues, wf, np.random.default_rng(seed))
    emp = oracle.empirical_distribution(runner, updates + burn_in, burn_in, topology.n_links)
    tv = oracle.tv_distance(pi, emp)
    return CheckResult("stationarity-single-site", tv <= tol, tv, tol,
                       f"TV = {tv:.4f} after {updates} updates (<= {tol})")


def empirical_parallel(topology: Topology, queues, pc: ProtocolConfig | None = None, updates: int = 10**6,
                       burn_in: int = 10**5, seed: int = 1, tol: float = 0.02,
                       wf: WeightFunction | None = None) -> CheckResult:
    wf = wf or WeightFunction()
    pc = pc or ProtocolConfig()
    pi = oracle.stationary_distribution(topology, queues, wf)
    runner = oracle.parallel_chain(topology, queues, wf, pc, np.random.default_rng(seed))
    emp = oracle.empirical_distribution(runner, updates + burn_in, burn_in, topology.n_links)
    tv = oracle.tv_distance(pi, emp)
    return CheckResult("stationarity-parallel", tv <= tol, tv, tol,
                       f"TV = {tv:.4f} after {updates} slots, W = {pc.W}, abstain = {pc.abstain} (<= {tol})")


def mrf_exact(instances: int = 10, sizes=range(2, 9), seed: int = 0, queue_max: int = 10**4,
              wf: WeightFunction | None = None) -> CheckResult:
    """Update probabilities depend on the two-hop closure only; must be exactly 0."""
    wf = wf or WeightFunction()
    sizes = list(sizes)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(instances):
        n = sizes[k % len(sizes)]
        topology = oracle.random_small_topology(n, rng)
        queues = rng.integers(1, queue_max + 1, size=n)
        worst = max(worst, oracle.mrf_conditional_check(topology, queues, wf))
    return CheckResult("markov-field", worst == 0.0, worst, 0.0,
                       f"{instances} instances, max conditional spread = {worst!r}")


@dataclass(frozen=True)
class ProtocolSurvey:
    runs: int
    invalid: int
    links: int
    never_selected: int
    topologies: int


def survey_protocol(topologies: int = 10, runs: int = 10**5, pc: ProtocolConfig | None = None,
                    config: NetworkConfig | None = None, seed: int = 0) -> ProtocolSurvey:
    """Run the decision protocol ``runs`` times spread over random full-size topologies."""
    pc = pc or ProtocolConfig()
    config = config or NetworkConfig()
    # separate streams so the topologies do not depend on the run count
    topo_rng, rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    per = -(-runs // topologies)
    invalid = links = never = done = 0
    for _ in range(topologies):
        topology = generate_topology(config, topo_rng)
        while topology.is_empty:
            topology = generate_topology(config, topo_rng)
        count = min(per, runs - done)
        # validity is re-checked here rather than trusting the sampler's own assertion
        backoffs = rng.integers(0, pc.W, size=(count, topology.n_links))
        contending = None if pc.abstain == 0.0 else rng.random(backoffs.shape) >= pc.abstain
        masks = protocol_from_backoffs(topology, backoffs, pc.W, contending)["in_d"]
        invalid += int((~valid_schedule_masks(topology, masks)).sum())
        links += topology.n_links
        never += int((~masks.any(axis=0)).sum())
        done += count
    return ProtocolSurvey(done, invalid, links, never, topologies)


def protocol_checks(survey: ProtocolSurvey) -> list[CheckResult]:
    validity = CheckResult("protocol-validity", survey.invalid == 0, survey.invalid, 0,
                           f"{survey.invalid} invalid schedules in {survey.runs} runs "
                           f"over {survey.topologies} topologies")
    coverage = CheckResult("protocol-coverage", survey.never_selected == 0, survey.never_selected, 0,
                           f"{survey.never_selected} of {survey.links} links never selected")
    return [validity, coverage]


__all__ = ["CheckResult", "ProtocolSurvey", "empirical_parallel", "empirical_single_site",
           "exact_stationarity", "mrf_exact", "protocol_checks",
           "small_instance", "survey_protocol"]
