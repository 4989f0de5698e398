import numpy as np
import pytest

from diattack.modelio import model_from_cstr_config


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def cstr_model():
    return model_from_cstr_config()


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import CRITERIA

    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[number])
