import pytest

from drawdown_tax import BrownianDrift, CramerLundberg, ScaleFn

MU, SIGMA, Q = 0.03, 0.4, 0.01


@pytest.fixture(scope="session")
def bm():
    return BrownianDrift(MU, SIGMA)


@pytest.fixture(scope="session")
def sf(bm):
    return ScaleFn(bm, Q)


@pytest.fixture(scope="session")
def cl():
    return CramerLundberg(1.5, 1.0, 1.0)


@pytest.fixture(scope="session")
def sf_cl(cl):
    return ScaleFn(cl, 0.05)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
