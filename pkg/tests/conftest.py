import sys

import numpy as np
import pytest


class GaussianLocationModel:
    """y_1..y_n ~ N(theta, 1); conjugate with a normal prior on theta."""

    def __init__(self, n):
        self.n = n

    def __call__(self, theta, rng):
        return theta[0] + rng.standard_normal(self.n)


def sample_mean(y):
    return np.array([np.mean(y)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
