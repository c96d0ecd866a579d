import numpy as np
import pytest

from tweezer_transport.model import PhysicalParams
from tweezer_transport.transport import TransportProblem


@pytest.fixture(scope="session")
def params():
    return PhysicalParams()


@pytest.fixture(scope="session")
def problem():
    return TransportProblem()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE_LINES: dict = {}


@pytest.fixture
def acceptance_report():
    """``report(n, passed, detail)`` prints and stores one line per criterion."""

    def report(n: int, passed: bool, detail: str):
        line = f"criterion {n}: {'PASS' if passed else 'FAIL'} {detail}"
        print(line)
        _ACCEPTANCE_LINES[n] = line
        return passed

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(_ACCEPTANCE_LINES[n])
