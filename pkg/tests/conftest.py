import math

import numpy as np
import pytest
from hypothesis import settings

from glzs.units import khz, us

settings.register_profile("glzs", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("glzs")

_ACCEPTANCE_LINES = []


@pytest.fixture
def record_criterion():
    """Collects one summary line per acceptance criterion for the terminal report."""
    return _ACCEPTANCE_LINES.append


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def reference_fields():
    return {"delta_0": khz(8.68), "omega_i": khz(49.24), "b_trace": khz(50.0),
            "prep_rate": math.pi / us(200)}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
