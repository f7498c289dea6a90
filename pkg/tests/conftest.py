import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from bearingloc.simulator import SCENARIOS  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=["S_a", "S_b", "S_c"])
def paper_scenario(request):
    return SCENARIOS[request.param]


@pytest.fixture
def scenario_dir():
    return ROOT / "scenarios"


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
