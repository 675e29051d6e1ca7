import os

import numpy as np
import pytest

from psychfit.dataset import FactorSpec, ScoredMatrix
from psychfit.simulate import simulate_cctt_like, simulate_factor_binary

DATA_ENV = "PSYCHFIT_CCTT_DATA"

# acceptance lines collected during the run, printed in the terminal summary
ACCEPTANCE = {}


def record(criterion, status, detail=""):
    ACCEPTANCE[criterion] = (status, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:>2}: {status}  {detail}")


@pytest.fixture(scope="session")
def cctt_like():
    """Synthetic 1519 x 25 data with the published structure and demographics."""
    return simulate_cctt_like(1519, np.random.default_rng(0))


@pytest.fixture(scope="session")
def three_factor():
    spec = FactorSpec.from_mapping({"f1": [1, 2, 3, 4, 5], "f2": [6, 7, 8, 9, 10], "f3": [11, 12, 13, 14, 15]})
    phi = np.array([[1, 0.4, 0.3], [0.4, 1, 0.5], [0.3, 0.5, 1]])
    return spec, phi


@pytest.fixture(scope="session")
def real_dataset():
    path = os.environ.get(DATA_ENV)
    if not path or not os.path.exists(path):
        return None
    return path


def tiny_matrix(rows, items=None, spec=None, grades=None, genders=None):
    return ScoredMatrix.from_array(np.array(rows), items, spec, grades, genders)


def sim_binary(n, spec, loadings, phi, difficulty, seed, **kw):
    return simulate_factor_binary(n, spec, loadings, phi, difficulty, np.random.default_rng(seed), **kw)
