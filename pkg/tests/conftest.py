import pytest

from cvp.kernels import builtin_kernel
from cvp.measure import build_line_grid, build_periodic_grid

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def gauss():
    return builtin_kernel("gauss1d")


@pytest.fixture(scope="session")
def line512():
    return build_line_grid([-8, 8], 512)


@pytest.fixture(scope="session")
def ring256():
    return build_periodic_grid(32, 256)
