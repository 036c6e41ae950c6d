import math

import numpy as np
import pytest

from leofl.config import Config


@pytest.fixture(scope="session")
def default_config() -> Config:
    return Config.load()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


def rel_err(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(1e-12, float(np.max(np.abs(b)))))


DEG = math.pi / 180.0


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(LINES, key=lambda k: (int(k.rstrip("abcdefgh")), k)):
            terminalreporter.write_line(LINES[key])
