from __future__ import annotations

import numpy as np
import pytest

from app.network import SensorNetwork, build_jittered_grid


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run desk-scale Monte Carlo suites")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale Monte Carlo suites (run with --runslow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def grid25() -> SensorNetwork:
    return build_jittered_grid(25, 40.0, 18.0, rng=np.random.default_rng(7))


@pytest.fixture
def line3() -> SensorNetwork:
    # 0 - 1 - 2 on a line, range 1.5
    return SensorNetwork.from_positions(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]), 1.5)
