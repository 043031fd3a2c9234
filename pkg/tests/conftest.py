from __future__ import annotations

import numpy as np
import pytest

from levyspde.catalog import default_catalog
from levyspde.measure import Box, UniformWindow


@pytest.fixture
def unit_square():
    return UniformWindow(Box((0.0, 0.0), (1.0, 1.0)), rate=3.0, window_id="unit-square")


@pytest.fixture
def interval():
    return UniformWindow(Box.interval(0.0, 1.0), rate=2.0, window_id="interval")


@pytest.fixture(scope="session")
def catalog():
    return default_catalog()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


_CRITERIA: dict[str, str] = {}


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion; returns the verdict."""

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {detail}"
        print(line)
        _CRITERIA[f"{number:02d}"] = line
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for key in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[key])
