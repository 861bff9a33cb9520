import numpy as np
import pytest

from demandml.features import assemble_space
from demandml.simulate import SimConfig, simulate_cohort

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def cohort_and_truth():
    return simulate_cohort(SimConfig(seed=1))


@pytest.fixture(scope="session")
def cohort(cohort_and_truth):
    return cohort_and_truth[0]


@pytest.fixture(scope="session")
def small_cohort():
    c, _ = simulate_cohort(SimConfig(seed=2, n_subjects=12, n_items=6))
    return c


@pytest.fixture(scope="session")
def fm_w(cohort):
    return assemble_space(cohort, "W")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
