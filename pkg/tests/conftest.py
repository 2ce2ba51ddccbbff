from __future__ import annotations

import numpy as np
import pytest

from safe_oco.geometry import AmbientSet, TruePolytope


@pytest.fixture
def box():
    return TruePolytope.box(3.0, 2), AmbientSet.cube(3.0, 2)


@pytest.fixture
def triangle():
    p = TruePolytope(np.array([[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]), np.array([1.0, 0.0, 0.0]))
    return p, AmbientSet(np.zeros(2), np.ones(2))


ACCEPTANCE_LINES: list[str] = []


def pytest_addoption(parser):
    parser.addoption("--run-slow", action="store_true", default=False, help="run long horizon profiles")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip = pytest.mark.skip(reason="long profile; pass --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
