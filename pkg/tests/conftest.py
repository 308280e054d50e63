import sys
from pathlib import Path

import pytest

TESTS = Path(__file__).resolve().parent
sys.path.insert(0, str(TESTS))

DATA = TESTS / "data"


@pytest.fixture(scope="session")
def default_config():
    from pourkit.config import ExperimentConfig

    return ExperimentConfig().validate()


@pytest.fixture(scope="session")
def world(default_config):
    from pourkit.experiments import World

    return World(default_config)


# one line per acceptance criterion, repeated at the end of the run
ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
