import math

import numpy as np
import pytest

from aqcsim import _kernels

R = 1 / math.sqrt(2)


def binomial_within(count, n, p, sigmas=4.0):
    """True when ``count`` successes of ``n`` are within ``sigmas`` binomial sd of ``p``."""
    sd = math.sqrt(p * (1 - p) / n)
    return abs(count / n - p) <= sigmas * sd + 1e-15


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=_kernels.available_backends())
def backend(request):
    return _kernels.load_backend(request.param)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
