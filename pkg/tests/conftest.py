from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from spatialcsma.topology import NetworkConfig, Topology, load_topology

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

DATA = Path(__file__).resolve().parents[1] / "src" / "spatialcsma" / "data"


@pytest.fixture(scope="session")
def reference17() -> Topology:
    return load_topology(DATA / "reference_17.txt")


@pytest.fixture
def cfg() -> NetworkConfig:
    return NetworkConfig()


def chain(n: int, spacing: float = 3.5, **kw) -> Topology:
    """Path graph: consecutive links within the close-in radius, others beyond it."""
    return Topology.from_positions([(k * spacing, 0.0) for k in range(n)], NetworkConfig(**kw))


def scattered(points, **kw) -> Topology:
    return Topology.from_positions(np.asarray(points, dtype=float), NetworkConfig(**kw))


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
