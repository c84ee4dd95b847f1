import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from selfrep_nca.grid import N_CHANNELS, Boundary, Grid
from selfrep_nca.rng import RngStream
from selfrep_nca.rule import UpdateNetwork

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def random_grid(seed: int, h: int = 8, w: int = 8, boundary=Boundary.TORUS, dead_fraction: float = 0.5,
                dtype=np.float32) -> Grid:
    g = np.random.default_rng(seed)
    cells = g.uniform(-1, 1, (h, w, N_CHANNELS))
    cells[..., 3] = g.uniform(0.0, 1.0, (h, w))
    cells[g.random((h, w)) < dead_fraction] = 0.0
    return Grid(cells.astype(dtype), boundary)


def random_net(seed: int, hidden: int = 8, scale: float = 0.3, dtype=np.float32) -> UpdateNetwork:
    net = UpdateNetwork.initialize(hidden, RngStream(seed), dtype=np.float64)
    g = np.random.default_rng(seed + 1)
    net = UpdateNetwork(net.w1, g.normal(0, 0.1, net.b1.shape), g.normal(0, scale, net.w2.shape),
                        g.normal(0, 0.05, net.b2.shape))
    return net.astype(dtype)


@pytest.fixture
def grid8():
    return random_grid(0)


@pytest.fixture
def net8():
    return random_net(0)


ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(n, passed, detail)``; returns ``passed``."""
    def record(number: int, passed: bool, detail: str) -> bool:
        ACCEPTANCE[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
