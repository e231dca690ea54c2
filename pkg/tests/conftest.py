import math
import sys

import numpy as np
import pytest

from thermoform import dynamics, potentials

LOG2 = math.log(2.0)
LOG3 = math.log(3.0)
LOG4 = math.log(4.0)


@pytest.fixture
def doubling():
    return dynamics.doubling()


@pytest.fixture
def slope3():
    return dynamics.linear(3)


@pytest.fixture
def intermittent():
    return dynamics.intermittent(0.5)


@pytest.fixture
def bernoulli_phi():
    """0 on [0, 1/2), log 3 on [1/2, 1)."""
    return potentials.halves(0.0, LOG3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "ACCEPTANCE_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
