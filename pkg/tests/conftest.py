import pytest

from opnevai.jacobi_core import FamilySpec, jacobi_parameters

FREUD2 = FamilySpec("freud", gamma=2.0)
MEIXNER = FamilySpec("meixner", s=1.0, p=0.25)
GENHERMITE = FamilySpec("generalized-hermite", t=1.0)
LAGUERRE = FamilySpec("laguerre-type", gamma=-0.5, kappa=2)


@pytest.fixture(scope="session")
def freud2():
    return jacobi_parameters(FREUD2)


@pytest.fixture(scope="session")
def meixner():
    return jacobi_parameters(MEIXNER)


@pytest.fixture(scope="session")
def genhermite():
    return jacobi_parameters(GENHERMITE)


@pytest.fixture(scope="session")
def laguerre():
    return jacobi_parameters(LAGUERRE)


# verdict lines collected by the acceptance suite, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
