import numpy as np
import pytest

from phasetr.mesh import build_mesh


@pytest.fixture
def unit_mesh():
    return build_mesh((0.0, 1.0, 0.0, 1.0), 8, 8)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
