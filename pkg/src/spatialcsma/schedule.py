"""Decision schedules: which links may update their status in the same slot.

A set ``D`` is a decision schedule when no member lies in another member's
two-hop closure. Then no member's update probability reads the status of
another member and all members can update at once from the same snapshot.

The distributed protocol uses ``W + 2`` control mini-slots. In the first
``W`` every link backs off a uniform number of mini-slots and sends INTENT
unless it already sensed a neighbour's INTENT; a collision-free INTENT puts
the link in ``S``. In mini-slot ``W + 1`` members of ``S`` send INTENT again,
and any non-member sensing two or more of them replies with DETECT in
mini-slot ``W + 2``. Members that sense DETECT drop out; the rest form ``D``.
"""
from __future__ import annotations

from collections.abc import Iterable, Iterator
from dataclasses import dataclass

import numpy as np

from .glauber import ScheduleState, WeightFunction, activation_probability
from .topology import Topology


@dataclass(frozen=True)
class ProtocolConfig:
    """``W`` backoff mini-slots, plus an optional abstention probability.

    With ``abstain = 0`` the protocol is exactly the INTENT/DETECT exchange
    described above. Under it some links can never be selected: in a path
    a-b-c, whenever a wins its backoff, c (whose only neighbour b is silenced)
    also joins S and b's DETECT removes both. With ``abstain > 0`` each link
    independently sits out the backoff phase (it still listens and may send
    DETECT), so every link reaches D alone with positive probability.
    """

    W: int = 32
    abstain: float = 0.0

    def __post_init__(self):
        if int(self.W) != self.W or self.W < 2:
            raise ValueError(f"W must be an integer >= 2, got {self.W}")
        if not 0.0 <= self.abstain < 1.0:
            raise ValueError(f"abstain must lie in [0, 1), got {self.abstain}")


@dataclass(frozen=True, eq=False)
class ProtocolTrace:
    """Per-link record of one protocol run.

    ``intent_slot`` is the 0-based backoff mini-slot in which the link sent
    INTENT, or -1 if it deferred or abstained.
    """

    W: int
    backoffs: np.ndarray
    contending: np.ndarray
    intent_slot: np.ndarray
    collided: np.ndarray
    in_s: np.ndarray
    detect_sent: np.ndarray
    dropped: np.ndarray

    def events(self) -> Iterator[tuple[int, int, str]]:
        """``(mini_slot, link, event)`` in mini-slot order, mini-slots 1-based."""
        n = len(self.backoffs)
        for i in np.flatnonzero(~self.contending):
            yield 1, int(i), "ABSTAIN"
        for t in range(self.W):
            for i in range(n):
                if self.intent_slot[i] == t:
                    yield t + 1, i, "INTENT"
                    if self.collided[i]:
                        yield t + 1, i, "COLLISION"
                elif self.contending[i] and self.backoffs[i] == t and self.intent_slot[i] < 0:
                    yield t + 1, i, "DEFER"
        for i in np.flatnonzero(self.in_s):
            yield self.W + 1, int(i), "INTENT"
        for i in np.flatnonzero(self.detect_sent):
            yield self.W + 2, int(i), "DETECT"
        for i in np.flatnonzero(self.dropped):
            yield self.W + 2, int(i), "DROP"

    def to_text(self) -> str:
        return "".join(f"{slot} {link} {event}\n" for slot, link, event in self.events())


@dataclass(frozen=True, eq=False)
class DecisionSchedule:
    members: frozenset
    trace: ProtocolTrace

    @property
    def S(self) -> frozenset:
        return frozenset(int(i) for i in np.flatnonzero(self.trace.in_s))


def is_valid_decision_schedule(topology: Topology, D: Iterable[int]) -> bool:
    members = sorted(set(D))
    if not members:
        return True
    return not topology.two_hop[np.ix_(members, members)].any()


def valid_schedule_masks(topology: Topology, masks: np.ndarray) -> np.ndarray:
    hits = (masks.astype(np.int64) @ topology.two_hop.astype(np.int64)) > 0
    return ~(hits & masks).any(axis=1)


def protocol_from_backoffs(topology: Topology, backoffs: np.ndarray, W: int,
                           contending: np.ndarray | None = None) -> dict[str, np.ndarray]:
    """Run the mini-slot protocol for a batch of backoff draws.

    ``backoffs`` has shape ``(runs, N)``; ``contending`` (same shape, default
    all True) marks links taking part in the backoff phase. Transmissions
    within a mini-slot are collected first and delivered afterwards, so
    simultaneous INTENTs collide and are sensed by every neighbour.
    """
    backoffs = np.atleast_2d(backoffs)
    runs, n = backoffs.shape
    if contending is not None:
        # a non-contender behaves like a link whose backoff never expires
        backoffs = np.where(np.atleast_2d(contending), backoffs, W)
    adj = topology.adjacency.astype(np.int64)
    blocked = np.zeros((runs, n), dtype=bool)
    intent_slot = np.full((runs, n), -1, dtype=np.int64)
    collided = np.zeros((runs, n), dtype=bool)
    in_s = np.zeros((runs, n), dtype=bool)
    for t in np.unique(backoffs[backoffs < W]):
        sending = (backoffs == t) & ~blocked
        if not sending.any():
            continue
        sensed = (sending.astype(np.int64) @ adj) > 0
        intent_slot[sending] = t
        collided |= sending & sensed
        in_s |= sending & ~sensed
        blocked |= sensed
    s_count = in_s.astype(np.int64) @ adj
    detect = ~in_s & (s_count >= 2)
    dropped = in_s & ((detect.astype(np.int64) @ adj) > 0)
    return {"intent_slot": intent_slot, "collided": collided, "in_s": in_s,
            "detect_sent": detect, "dropped": dropped, "in_d": in_s & ~dropped}


def _contenders(pc: ProtocolConfig, rng: np.random.Generator, shape) -> np.ndarray | None:
    if pc.abstain == 0.0:
        return None
    return rng.random(shape) >= pc.abstain


def run_decision_protocol(topology: Topology, pc: ProtocolConfig, rng: np.random.Generator) -> DecisionSchedule:
    backoffs = rng.integers(0, pc.W, size=topology.n_links)
    contending = _contenders(pc, rng, backoffs.shape)
    out = protocol_from_backoffs(topology, backoffs[None, :], pc.W, contending)
    members = frozenset(int(i) for i in np.flatnonzero(out["in_d"][0]))
    if not is_valid_decision_schedule(topology, members):
        raise RuntimeError(f"protocol produced an invalid decision schedule {sorted(members)}")
    if contending is None:
        contending = np.ones(topology.n_links, dtype=bool)
    trace = ProtocolTrace(pc.W, backoffs, contending, out["intent_slot"][0], out["collided"][0], out["in_s"][0],
                          out["detect_sent"][0], out["dropped"][0])
    return DecisionSchedule(members, trace)


def sample_decision_masks(topology: Topology, pc: ProtocolConfig, rng: np.random.Generator,
                          count: int) -> np.ndarray:
    """``count`` independent protocol outcomes as a boolean ``(count, N)`` array.

    Decision schedules do not depend on the link statuses, so simulations
    draw them ahead in batches. Every row is checked for validity.
    """
    backoffs = rng.integers(0, pc.W, size=(count, topology.n_links))
    contending = _contenders(pc, rng, backoffs.shape)
    masks = protocol_from_backoffs(topology, backoffs, pc.W, contending)["in_d"]
    if topology.n_links and not valid_schedule_masks(topology, masks).all():
        raise RuntimeError("protocol produced an invalid decision schedule")
    return masks


def parallel_update_mask(mask: np.ndarray, members, g: np.ndarray, topology: Topology,
                         rng: np.random.Generator) -> np.ndarray:
    """Update every member from the common pre-update snapshot ``mask``."""
    members = list(members)
    if not members:
        return mask.copy()
    probs = [activation_probability(mask, i, g, topology) for i in members]
    coins = rng.random(len(members))
    new = mask.copy()
    new[members] = coins < np.asarray(probs)
    return new


def parallel_update(state: ScheduleState, D, topology: Topology, wf: WeightFunction,
                    rng: np.random.Generator) -> ScheduleState:
    members = sorted(D.members if isinstance(D, DecisionSchedule) else set(D))
    if not is_valid_decision_schedule(topology, members):
        raise ValueError(f"{members} is not a decision schedule")
    g = np.atleast_1d(wf(np.asarray(state.queues, dtype=float)))
    new = parallel_update_mask(state.mask(), members, g, topology, rng)
    return ScheduleState(frozenset(int(i) for i in np.flatnonzero(new)), state.queues)
