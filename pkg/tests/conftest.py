import math

import numpy as np
import pytest

from kuramoto_rgg.graphs import GraphModel, NodeSet, build_graph

ACCEPTANCE_LINES = []


@pytest.fixture
def square_nodes():
    return NodeSet(np.array([0.0, math.pi / 2, math.pi, 3 * math.pi / 2]))


@pytest.fixture
def square_graph(square_nodes):
    return build_graph(square_nodes, GraphModel.rgg(1.6))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
