from __future__ import annotations

import numpy as np
import pytest

from helpers import nested_design, parts
from svtest.kernels import BACKENDS


@pytest.fixture(params=sorted(BACKENDS))
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture
def design(rng):
    return nested_design(rng)


@pytest.fixture
def fine_coarse(design):
    return parts(design)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
