from pathlib import Path

import pytest

from hjmsv import InitialCurve, ModelParams, load_curve

DATA = Path(__file__).resolve().parents[1] / "src" / "hjmsv" / "data"

# filled by test_acceptance, printed once at the end of the session
ACCEPTANCE_LINES = {}


@pytest.fixture(scope="session")
def flat_curve():
    return InitialCurve.flat(1.04)


@pytest.fixture(scope="session")
def quote_curve():
    return load_curve(DATA / "sample_curve.txt")


@pytest.fixture(scope="session")
def params():
    return ModelParams.reference()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
