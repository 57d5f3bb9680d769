import numpy as np
import pytest

from geigertree.offspring import build_law, extinction_probs


@pytest.fixture(scope="session")
def laws():
    return {name: build_law(name) for name in ("binary", "geometric", "poisson")}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def cache_factory(laws):
    store = {}

    def make(name, horizon):
        key = (name, horizon)
        if key not in store:
            store[key] = extinction_probs(laws[name], horizon)
        return store[key]

    return make


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import BUDGET, LINES
    except ImportError:
        return
    if LINES:
        terminalreporter.write_sep("=", f"acceptance ({BUDGET} budget)")
        for line in LINES:
            terminalreporter.write_line(line)
