import pytest

from deltanls import make_grid, sample_ground_state

P = 5.0

_ACCEPTANCE_LINES = []


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    _ACCEPTANCE_LINES.append((number, passed, detail))


@pytest.fixture(scope="session")
def ref_grid():
    return make_grid(20.0, 4097)


@pytest.fixture(scope="session")
def small_grid():
    return make_grid(20.0, 1025)


@pytest.fixture(scope="session")
def Q(ref_grid):
    return sample_ground_state(ref_grid, P)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(_ACCEPTANCE_LINES):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
