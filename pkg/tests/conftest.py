import numpy as np
import pytest

from predictive_catch.agent import AgentParams, simulate_population
from predictive_catch.ensemble import Dataset
from predictive_catch.features import featurize

# acceptance lines collected by tests/test_acceptance.py, echoed at session end
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_trials():
    return simulate_population(n_subjects=2, trials_per_subject=20, seed=11)


@pytest.fixture(scope="session")
def small_dataset(small_trials):
    return Dataset.build(featurize(small_trials), seed=11)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
