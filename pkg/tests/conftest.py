import shutil
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).parent / "fixtures"
HAVE_SOLVER = shutil.which("z3") is not None


def pytest_collection_modifyitems(config, items):
    if HAVE_SOLVER:
        return
    skip = pytest.mark.skip(reason="z3 not on PATH")
    for item in items:
        if "solver" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def solver_config():
    from smtnet.solver import SolverConfig

    return SolverConfig("z3", timeout_s=120)
