import numpy as np
import pytest

from romforge.dataset import fit_normalizer, normalize
from romforge.fom import lattice_snapshots


@pytest.fixture(scope="session")
def burgers_train():
    return lattice_snapshots(train=True)


@pytest.fixture(scope="session")
def burgers_val():
    return lattice_snapshots(train=False)


@pytest.fixture(scope="session")
def burgers_normalized(burgers_train, burgers_val):
    stats = fit_normalizer(burgers_train)
    return stats, normalize(burgers_train, stats), normalize(burgers_val, stats)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_CRITERIA = {}


@pytest.fixture
def criterion():
    """Record ``(number, description, passed, detail)`` for the acceptance summary."""

    def record(number, description, passed, detail=""):
        _CRITERIA[number] = (description, bool(passed), detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        description, passed, detail = _CRITERIA[number]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number:>2}: {description} :: {detail}")
