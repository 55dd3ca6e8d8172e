import pytest

from levydd.levy_model import LevyModel
from levydd.scale_functions import scale_table

# Lines recorded by the acceptance module, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def bm():
    return LevyModel.brownian(0.0, 1.0)


@pytest.fixture(scope="session")
def jump_model():
    return LevyModel.exp_jump_diffusion(1.0, 1.0, 1.0, 1.0)


@pytest.fixture(scope="session")
def bm_half(bm):
    return scale_table(bm, 0.5)


@pytest.fixture(scope="session")
def bm_zero(bm):
    return scale_table(bm, 0.0)
