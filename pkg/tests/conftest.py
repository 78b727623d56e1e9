from pathlib import Path

import pytest

from vcpi.grid import bundled_case, load_case
from vcpi.powerflow import solve_power_flow

DATA = Path(__file__).parent / "data"
NE39_REF = 31


@pytest.fixture(scope="session")
def ne39():
    return load_case(bundled_case("ne39"))


@pytest.fixture(scope="session")
def ne39_point(ne39):
    return solve_power_flow(ne39, NE39_REF)


@pytest.fixture(scope="session")
def case3():
    return load_case(bundled_case("case3"))


@pytest.fixture
def data_dir():
    return DATA


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for res in sorted(RESULTS, key=lambda r: r.number):
            terminalreporter.write_line(res.line())
