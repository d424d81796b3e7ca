import math

import numpy as np
import pytest

from spikedlab.landscape import MixtureSpec, sample_disorder


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long Monte Carlo runs")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def sphere_point(N, rng):
    g = rng.standard_normal(N)
    return math.sqrt(N) * g / np.linalg.norm(g)


def instance(N=8, mixture=None, k=3, lam=1.5, beta=1.0, seed=0):
    spec = MixtureSpec(N=N, mixture=mixture or {2: 0.7, 3: 1.0}, k=k, lam=lam, beta=beta)
    return spec, sample_disorder(spec, seed)


@pytest.fixture
def small():
    return instance()


_CRITERIA = {}


@pytest.fixture
def criterion():
    """criterion(number, passed, detail): record and print one acceptance line, then assert."""
    def record(number, passed, detail):
        line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}: {detail}"
        _CRITERIA[number] = line
        print(line)
        assert passed, line
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[n])
