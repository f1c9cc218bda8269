import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("thorough", max_examples=300, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


# plain Pauli algebra, written out here so the tests do not lean on the package's own operators
SX = np.array([[0, 1], [1, 0]], dtype=complex) / 2
SY = np.array([[0, -1j], [1j, 0]], dtype=complex) / 2
SZ = np.array([[1, 0], [0, -1]], dtype=complex) / 2
E2 = np.eye(2)


def spin1(a):
    return np.kron(a, E2)


def spin2(a):
    return np.kron(E2, a)


@pytest.fixture
def pauli():
    return {"1x": spin1(SX), "1y": spin1(SY), "1z": spin1(SZ), "2x": spin2(SX), "2y": spin2(SY), "2z": spin2(SZ)}


# one line per acceptance criterion, filled in by test_acceptance and printed after the run
ACCEPTANCE_LINES: dict[str, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES, key=lambda k: (int(k.rstrip("abc")), k)):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
