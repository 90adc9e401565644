import numpy as np
import pytest
from hypothesis import strategies as st

from riskbound.marginals import from_atoms


def random_marginal(rng, n_atoms, scale=1.0, integer=False):
    values = rng.normal(scale=scale, size=n_atoms)
    if integer:
        values = np.round(values * 3)
    weights = rng.random(n_atoms) + 0.05
    return from_atoms(zip(values, weights))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def uniform01():
    return from_atoms([(0, 1), (1, 1)])


@st.composite
def marginals(draw, max_atoms=4):
    n = draw(st.integers(1, max_atoms))
    values = draw(st.lists(st.integers(-5, 5), min_size=n, max_size=n, unique=True))
    weights = draw(st.lists(st.integers(1, 9), min_size=n, max_size=n))
    return from_atoms(zip(values, weights))


ACCEPTANCE_RESULTS: dict[str, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE_RESULTS, key=lambda s: int(s.split()[0][2:])):
        terminalreporter.write_line(f"{ACCEPTANCE_RESULTS[name]}  {name}")
