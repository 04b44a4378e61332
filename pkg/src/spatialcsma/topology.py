"""Bipole network instances on a square region.

Each link is a transmitter/receiver pair at distance ``R``. Inter-link
distances use transmitter positions only (links collapsed to points); the
receiver direction is kept so an instance can be rendered or replayed.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

FILE_MAGIC = "# spatialcsma-topology v1"


@dataclass(frozen=True)
class NetworkConfig:
    """Physical parameters of a network instance.

    Defaults are the 17-link reference setting: 13x13 square, density 0.1,
    ``R = 0.25``, ``alpha = 2.5``, close-in radius 4 and a 17 dB threshold.
    """

    side_length: float = 13.0
    density: float = 0.1
    link_distance: float = 0.25
    path_loss_alpha: float = 2.5
    sir_threshold_db: float = 17.0
    close_in_radius: float = 4.0
    seed: int = 0
    sir_threshold: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.side_length > 0:
            raise ValueError(f"side_length must be positive, got {self.side_length}")
        if not self.density > 0:
            raise ValueError(f"density must be positive, got {self.density}")
        if not self.link_distance > 0:
            raise ValueError(f"link_distance must be positive, got {self.link_distance}")
        if not self.path_loss_alpha > 2:
            raise ValueError(f"path_loss_alpha must exceed 2, got {self.path_loss_alpha}")
        if not math.isfinite(self.sir_threshold_db):
            raise ValueError("sir_threshold_db must be finite")
        if not self.close_in_radius > self.link_distance:
            raise ValueError("close_in_radius must exceed link_distance")
        object.__setattr__(self, "sir_threshold", 10.0 ** (self.sir_threshold_db / 10.0))

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.init}


def gain_factor(r, config: NetworkConfig):
    """Probability that a single interferer at distance ``r`` does not cause outage.

    ``f(r) = 1 / (1 + (R/r)^alpha * T)``. Accepts scalars or arrays.
    """
    r_arr = np.asarray(r, dtype=float)
    if np.any(~(r_arr > 0)):
        raise ValueError("gain_factor requires r > 0")
    ratio = (config.link_distance / r_arr) ** config.path_loss_alpha
    out = 1.0 / (1.0 + ratio * config.sir_threshold)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class Topology:
    config: NetworkConfig
    positions: np.ndarray
    rx_angles: np.ndarray
    distances: np.ndarray
    adjacency: np.ndarray
    neighbour_sets: tuple[frozenset[int], ...]
    neighbour_index: tuple[np.ndarray, ...]
    # f(r_ij) for every ordered pair, 0 on the diagonal
    gain: np.ndarray
    # log f(r_ij) restricted to close-in neighbours, 0 elsewhere
    log_gain_close: np.ndarray
    # log f(r_ij) for every i != j, 0 on the diagonal
    log_gain_all: np.ndarray
    # (R / r_ij)^alpha for i != j, 0 on the diagonal
    path_ratio: np.ndarray
    path_ratio_close: np.ndarray
    two_hop: np.ndarray
    conflict_edges: frozenset[tuple[int, int]]

    @classmethod
    def from_positions(cls, positions, config: NetworkConfig, rx_angles=None) -> Topology:
        pos = np.asarray(positions, dtype=float).reshape(-1, 2)
        n = len(pos)
        angles = np.zeros(n) if rx_angles is None else np.asarray(rx_angles, dtype=float).reshape(n)
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        diff = pos[:, None, :] - pos[None, :, :]
        dist = np.sqrt((diff**2).sum(axis=-1))
        off = ~np.eye(n, dtype=bool)
        if np.any(dist[off] <= 0):
            raise ValueError("two links share a position")
        adj = (dist <= config.close_in_radius) & off

        gain = np.zeros((n, n))
        if n > 1:
            gain[off] = gain_factor(dist[off], config)
        log_all = np.zeros((n, n))
        log_all[off] = np.log(gain[off])
        log_close = np.where(adj, log_all, 0.0)
        ratio = np.zeros((n, n))
        ratio[off] = (config.link_distance / dist[off]) ** config.path_loss_alpha
        ratio_close = np.where(adj, ratio, 0.0)

        # two-hop closure: N_i plus neighbours of neighbours, minus i itself
        a = adj.astype(np.int64)
        two_hop = ((a + a @ a) > 0) & off

        nbr_index = tuple(np.flatnonzero(adj[i]) for i in range(n))
        nbr_sets = tuple(frozenset(int(j) for j in idx) for idx in nbr_index)
        edges = frozenset((int(i), int(j)) for i, j in zip(*np.nonzero(np.triu(adj))))

        for arr in (pos, angles, dist, adj, gain, log_close, log_all, ratio, ratio_close, two_hop):
            arr.setflags(write=False)
        for idx in nbr_index:
            idx.setflags(write=False)
        return cls(config, pos, angles, dist, adj, nbr_sets, nbr_index, gain,
                   log_close, log_all, ratio, ratio_close, two_hop, edges)

    @classmethod
    def empty(cls, config: NetworkConfig) -> Topology:
        return cls.from_positions(np.zeros((0, 2)), config)

    @property
    def n_links(self) -> int:
        return len(self.positions)

    @property
    def is_empty(self) -> bool:
        return self.n_links == 0

    @property
    def receiver_positions(self) -> np.ndarray:
        r = self.config.link_distance
        return self.positions + r * np.column_stack([np.cos(self.rx_angles), np.sin(self.rx_angles)])

    def gain_factors(self) -> dict[tuple[int, int], float]:
        """``f_ij`` for every ordered neighbour pair."""
        return {(i, j): float(self.gain[i, j]) for i in range(self.n_links) for j in self.neighbour_index[i]}

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(repr(sorted(self.config.as_dict().items())).encode())
        h.update(np.ascontiguousarray(self.positions).tobytes())
        h.update(np.ascontiguousarray(self.rx_angles).tobytes())
        return h.hexdigest()[:16]


def generate_topology(config: NetworkConfig, rng: np.random.Generator) -> Topology:
    """Draw a homogeneous PPP of transmitters with a receiver at distance R each.

    A draw with zero points returns ``Topology.empty``; resampling is left to
    the caller.
    """
    mean = config.density * config.side_length**2
    n = int(rng.poisson(mean))
    if n == 0:
        return Topology.empty(config)
    positions = rng.uniform(0.0, config.side_length, size=(n, 2))
    angles = rng.uniform(0.0, 2 * math.pi, size=n)
    return Topology.from_positions(positions, config, angles)


def build_conflict_graph(topology: Topology) -> frozenset[tuple[int, int]]:
    return topology.conflict_edges


def two_hop_closure(topology: Topology, i: int) -> frozenset[int]:
    """Links whose status can influence link ``i``'s update decision."""
    return frozenset(int(j) for j in np.flatnonzero(topology.two_hop[i]))


def save_topology(topology: Topology, path) -> None:
    """Write the instance as text: config echo, then ``id x y rx_angle`` per link.

    Floats are written with ``repr`` so a load reproduces the instance bit for bit.
    """
    lines = [FILE_MAGIC]
    for key, value in topology.config.as_dict().items():
        lines.append(f"# {key} = {value!r}")
    lines.append("# columns: id x y rx_angle")
    for i, ((x, y), a) in enumerate(zip(topology.positions, topology.rx_angles)):
        lines.append(f"{i} {float(x)!r} {float(y)!r} {float(a)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


_CONFIG_TYPES = {f.name: f.type for f in fields(NetworkConfig) if f.init}


def load_topology(path, config: NetworkConfig | None = None) -> Topology:
    """Read a file written by :func:`save_topology`.

    If ``config`` is given it overrides the header, which allows replaying the
    same link positions under different physical parameters.
    """
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != FILE_MAGIC:
        raise ValueError(f"{path}: not a topology file")
    header = {}
    rows = []
    for lineno, line in enumerate(text[1:], start=2):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, _, value = body.partition("=")
                key = key.strip()
                if key not in _CONFIG_TYPES:
                    raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
                header[key] = int(value) if key == "seed" else float(value)
            continue
        parts = line.split()
        if len(parts) != 4 or int(parts[0]) != len(rows):
            raise ValueError(f"{path}:{lineno}: malformed link row")
        rows.append([float(p) for p in parts[1:]])
    if config is None:
        config = NetworkConfig(**header)
    if not rows:
        return Topology.empty(config)
    arr = np.array(rows)
    return Topology.from_positions(arr[:, :2], config, arr[:, 2])
