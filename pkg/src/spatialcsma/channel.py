"""Success probabilities under Rayleigh fading and realized SIR outcomes.

Two interference sets are supported. ``"close-in"`` only counts active
links within the close-in radius (what a link can compute from neighbour
discovery); ``"all-links"`` counts every other active link and is the exact
outage probability of the interference-limited channel.
"""
from __future__ import annotations

import math
from collections.abc import Iterable

import numpy as np

from .topology import Topology

CLOSE_IN = "close-in"
ALL_LINKS = "all-links"
MODES = (CLOSE_IN, ALL_LINKS)

FadingDraw = dict  # (receiver link i, transmitter link j) -> |h_ij|^2


def _log_gain(topology: Topology, mode: str) -> np.ndarray:
    if mode == CLOSE_IN:
        return topology.log_gain_close
    if mode == ALL_LINKS:
        return topology.log_gain_all
    raise ValueError(f"unknown interference mode {mode!r}; expected one of {MODES}")


def success_probability(topology: Topology, active: Iterable[int], i: int, mode: str = CLOSE_IN) -> float:
    """mu_i(M): product of f(r_ij) over the interferers of ``i`` in ``M``."""
    active = set(active)
    if i not in active:
        raise ValueError(f"link {i} is not in the active set")
    if mode == CLOSE_IN:
        interferers = active & topology.neighbour_sets[i]
    elif mode == ALL_LINKS:
        interferers = active - {i}
    else:
        raise ValueError(f"unknown interference mode {mode!r}; expected one of {MODES}")
    p = 1.0
    for j in sorted(interferers):
        p *= topology.gain[i, j]
    return float(p)


def rate_vector(topology: Topology, active: Iterable[int], mode: str = CLOSE_IN) -> np.ndarray:
    """Length-N vector of success probabilities; zero for links outside ``active``."""
    mask = np.zeros(topology.n_links, dtype=bool)
    mask[list(active)] = True
    return rates_from_mask(topology, mask, mode)


def rates_from_mask(topology: Topology, mask: np.ndarray, mode: str = CLOSE_IN) -> np.ndarray:
    log_g = _log_gain(topology, mode)
    mu = np.exp(log_g @ mask.astype(float))
    return np.where(mask, mu, 0.0)


def draw_fading(rng: np.random.Generator, pairs: Iterable[tuple[int, int]]) -> FadingDraw:
    """Independent unit-mean exponential power gains, one per ordered pair."""
    keys = sorted(set(pairs))
    values = rng.exponential(1.0, size=len(keys))
    return {k: float(v) for k, v in zip(keys, values)}


def required_pairs(active: Iterable[int], i: int) -> list[tuple[int, int]]:
    return [(i, i)] + [(i, j) for j in sorted(set(active)) if j != i]


def realized_success(topology: Topology, active: Iterable[int], i: int, draw: FadingDraw) -> bool:
    """Whether link ``i`` decodes given one fading realization.

    Interference is summed over every other active link. With no interferer
    the SIR is infinite (noise is neglected) and the packet always succeeds.
    """
    active = set(active)
    if i not in active:
        raise ValueError(f"link {i} is not in the active set")
    cfg = topology.config
    try:
        signal = draw[(i, i)] * cfg.link_distance ** (-cfg.path_loss_alpha)
        interference = sum(draw[(i, j)] * topology.distances[i, j] ** (-cfg.path_loss_alpha)
                           for j in active if j != i)
    except KeyError as exc:
        raise ValueError(f"fading draw is missing gain for pair {exc.args[0]}") from None
    if interference == 0:
        return True
    return signal / interference >= cfg.sir_threshold


def realized_successes(topology: Topology, transmitters: np.ndarray, rng: np.random.Generator,
                       mode: str = ALL_LINKS) -> np.ndarray:
    """Vectorized data-slot outcome for every transmitting link.

    ``transmitters`` is a boolean mask. Returns a boolean mask of links whose
    SIR clears the threshold. With ``mode="close-in"`` only transmitters
    within the close-in radius count as interference.
    """
    if mode not in MODES:
        raise ValueError(f"unknown interference mode {mode!r}; expected one of {MODES}")
    idx = np.flatnonzero(transmitters)
    out = np.zeros(topology.n_links, dtype=bool)
    k = len(idx)
    if k == 0:
        return out
    ratio = topology.path_ratio_close if mode == CLOSE_IN else topology.path_ratio
    h = rng.standard_exponential((k, k))
    # normalized interference sum_j h_ij (R / r_ij)^alpha, compared with h_ii / T
    interference = np.einsum("ij,ij->i", h, ratio[idx][:, idx])
    out[idx] = h.diagonal() >= topology.config.sir_threshold * interference
    return out


def enumerate_rate_vectors(topology: Topology, mode: str = CLOSE_IN, max_links: int = 16):
    """Yield ``(subset_index, rate_vector)`` for every subset; link i is bit i."""
    n = topology.n_links
    if n > max_links:
        raise ValueError(f"refusing to enumerate 2^{n} subsets (limit {max_links} links)")
    for s in range(1 << n):
        mask = np.array([(s >> b) & 1 for b in range(n)], dtype=bool)
        yield s, rates_from_mask(topology, mask, mode)


def binomial_sigma(p: float, n: int) -> float:
    return math.sqrt(p * (1 - p) / n)
