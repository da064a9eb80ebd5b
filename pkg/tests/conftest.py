import numpy as np
import pytest


def random_spd(rng, n, shift=1.0):
    m = rng.standard_normal((n, n))
    return m.T @ m + shift * np.eye(n)


@pytest.fixture
def rng():
    return np.random.default_rng(20261014)


ACCEPTANCE_LINES = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep
    elif rep.when == "setup" and rep.skipped and item.module.__name__.endswith("test_acceptance"):
        ACCEPTANCE_LINES.append(f"[SKIP] {item.name}: {rep.longrepr[2]}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
