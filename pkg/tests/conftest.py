import logging

import numpy as np
import pytest

from kinetic.activity.service import ActivityService
from kinetic.spatial.service import CrowdService


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: acceptance-scale runs")


@pytest.fixture(autouse=True)
def _quiet_logs(caplog):
    caplog.set_level(logging.WARNING)


@pytest.fixture
def unit_grid():
    return ActivityService.make_uniform_grid(0.0, 1.0, 21)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(1234))


@pytest.fixture
def arena_file(tmp_path):
    def write(rows: list[str], dx: float = 1.0):
        path = tmp_path / "arena.map"
        path.write_text(f"{len(rows[0])} {len(rows)} {dx}\n" + "\n".join(rows) + "\n")
        return path

    return write


@pytest.fixture
def corridor(arena_file):
    rows = ["#" * 12] + ["#" + "." * 10 + "E"] * 3 + ["#" * 12]
    return CrowdService.load_arena(arena_file(rows))
