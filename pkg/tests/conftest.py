import math

import numpy as np
import pytest

from qarrival.states import GaussianPacket, WaveState

ACCEPTANCE_LINES: list[str] = []


def appendix():
    w = 1 / math.sqrt(2)
    return WaveState.from_packets([(w, GaussianPacket(-10.0, 2.0, 3.0)),
                                   (w, GaussianPacket(-34.0, 6.0, 3.0))])


@pytest.fixture(scope="session")
def appendix_state():
    return appendix()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
