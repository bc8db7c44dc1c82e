from dataclasses import replace

import numpy as np
import pytest

from cmrac.harness import load_bundled
from cmrac.plant import matching_gains
from cmrac.sim import run_episode


@pytest.fixture(scope="session")
def bench():
    return load_bundled()


@pytest.fixture(scope="session")
def model(bench):
    return bench.model


@pytest.fixture(scope="session")
def ref(bench):
    return bench.ref


@pytest.fixture(scope="session")
def ideal(model, ref):
    return matching_gains(model, ref)


@pytest.fixture(scope="session")
def nominal(bench):
    """Combined-law episode of the bundled scenario."""
    return run_episode(bench.sim, bench.model, bench.ref)


@pytest.fixture(scope="session")
def nominal_gradient(bench):
    return run_episode(replace(bench.sim, law="gradient"), bench.model, bench.ref)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_hurwitz(rng, n):
    """Random Hurwitz matrix: a random matrix shifted left of its spectral abscissa."""
    M = rng.normal(size=(n, n))
    shift = np.max(np.linalg.eigvals(M).real) + rng.uniform(0.1, 2.0)
    return M - shift * np.eye(n)


ACCEPTANCE_LINES = []


def report(criterion, ok, detail):
    """Record and print one acceptance line, then fail the test if ``ok`` is false."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
