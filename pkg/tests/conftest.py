import sys
import numpy as np
import pytest
from hypothesis import strategies as st

from timebin_ghz.quantum import random_density_matrix, random_pure_state

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def density_from_seed(seed, n_qubits=3, rank=None):
    return random_density_matrix(n_qubits, np.random.default_rng(seed), rank)


def pure_from_seed(seed, n_qubits=3):
    return random_pure_state(n_qubits, np.random.default_rng(seed))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
