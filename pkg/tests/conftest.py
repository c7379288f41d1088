import numpy as np
import pytest

from fedtheft import dataio, rng
from fedtheft.pipeline import prepare

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def gen():
    return np.random.default_rng(12345)


def desk_data(seed, n=5000, d=100, theft_rate=0.09):
    data = dataio.generate_synthetic(n, d, theft_rate, 0.0, seed)
    return prepare(data, 0.2, seed)


@pytest.fixture(scope="session")
def small_split():
    return desk_data(3, n=600, d=12, theft_rate=0.2)
