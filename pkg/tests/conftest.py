import numpy as np
import pytest

from mkvlab.flow import lambda_bound
from mkvlab.measure import Grid
from mkvlab.potential import check_assumptions, make_quartic
from mkvlab.tilt import stationary_triple

L = 4.0
J_REF = 1.5

_CRITERIA = {}


@pytest.fixture(scope="session")
def spec():
    return make_quartic(0.25, -0.5, J_REF, L)


@pytest.fixture(scope="session")
def report(spec):
    return check_assumptions(spec)


@pytest.fixture(scope="session")
def lam(spec, report):
    return lambda_bound(spec, report)


@pytest.fixture(scope="session")
def grid():
    return Grid(L, 400)


@pytest.fixture(scope="session")
def fine_grid():
    return Grid(L, 1600)


@pytest.fixture(scope="session")
def triple(spec, grid):
    return stationary_triple(spec, grid)


@pytest.fixture(scope="session")
def fine_triple(spec, fine_grid):
    return stationary_triple(spec, fine_grid)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def criterion():
    """Record an acceptance verdict; the terminal summary prints one line each."""

    def record(number, title, ok, detail=""):
        _CRITERIA[number] = (title, bool(ok), detail)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        title, ok, detail = _CRITERIA[k]
        tr.write_line(f"[{'PASS' if ok else 'FAIL'}] {k:2d} {title}: {detail}")
