import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(12345))


def within_sigma(observed, expected, sigma, k=5.0):
    return abs(observed - expected) <= k * sigma


_CRITERIA = pytest.StashKey[dict]()


@pytest.fixture
def record_criterion(pytestconfig):
    """Store a one-line verdict for the acceptance summary."""
    store = pytestconfig.stash.setdefault(_CRITERIA, {})

    def record(number, name, passed, detail):
        line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {name}: {detail}"
        store[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_CRITERIA, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(store):
        terminalreporter.write_line(store[number])
