import numpy as np
import pytest

from shapeattr.backgrounds import load_backgrounds

import helpers


@pytest.fixture(scope="session")
def backgrounds72():
    return load_backgrounds((72, 72))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if helpers.ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(helpers.ACCEPTANCE):
            terminalreporter.write_line(line)
