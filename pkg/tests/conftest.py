import numpy as np
import pytest

import oracles


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if oracles.ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in oracles.ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
