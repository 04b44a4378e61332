"""Spatial CSMA scheduling under an SIR interference model.

Modules: ``topology`` (link placement), ``channel`` (success probabilities
and fading), ``glauber`` (single-site updates), ``schedule`` (decision
schedules and parallel updates), ``baseline`` (conflict-graph CSMA),
``oracle`` (exact small-instance distributions and kernels) and ``harness``
(queueing simulations).
"""
from .channel import ALL_LINKS, CLOSE_IN, rate_vector, realized_success, success_probability
from .glauber import ScheduleState, WeightFunction, single_site_update, update_probability
from .harness import MetricsSeries, RunSpec, run_convergence, run_sweep, simulate
from .schedule import DecisionSchedule, ProtocolConfig, parallel_update, run_decision_protocol
from .topology import NetworkConfig, Topology, gain_factor, generate_topology, load_topology, save_topology

__version__ = "0.1.0"

__all__ = [
    "ALL_LINKS", "CLOSE_IN", "DecisionSchedule", "MetricsSeries", "NetworkConfig", "ProtocolConfig",
    "RunSpec", "ScheduleState", "Topology", "WeightFunction", "gain_factor", "generate_topology",
    "load_topology", "parallel_update", "rate_vector", "realized_success", "run_convergence",
    "run_decision_protocol", "run_sweep", "save_topology", "simulate", "single_site_update",
    "success_probability", "update_probability",
]
