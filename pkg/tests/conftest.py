import numpy as np
import pytest
from hypothesis import settings

from isingscreen import IsingModel, QuboModel, embedded_ising, exact_spectrum

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def model():
    return embedded_ising()


@pytest.fixture(scope="session")
def spectrum(model):
    return exact_spectrum(model, 5)


def random_qubo(rng, n, sense="minimize", scale=3.0):
    quad = np.triu(rng.normal(0, scale, (n, n)), k=1)
    return QuboModel(n, rng.normal(0, scale), rng.normal(0, scale, n), quad, sense)


def random_ising(rng, n, density=1.0):
    j = np.triu(rng.normal(0, 1, (n, n)), k=1)
    j *= rng.random((n, n)) < density
    return IsingModel(n, rng.normal(0, 1, n), j, rng.normal(0, 1))


def random_state(rng, n):
    amps = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return amps / np.linalg.norm(amps)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
