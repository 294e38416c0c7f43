import itertools

import numpy as np
import pytest

from sensornet.graph import build_graph


@pytest.fixture
def star():
    return build_graph([(0, 1), (0, 2), (0, 3)], "undirected")


@pytest.fixture
def path3():
    return build_graph([(0, 1), (1, 2)], "undirected")


def random_small_graphs(count, max_nodes, seed, directed=False, p=0.35):
    """Random graphs (possibly disconnected) with at least one edge."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        n = int(rng.integers(2, max_nodes + 1))
        pairs = itertools.permutations(range(n), 2) if directed else itertools.combinations(range(n), 2)
        edges = [e for e in pairs if rng.random() < p]
        if edges:
            out.append(build_graph(edges, "directed" if directed else "undirected", node_count=n))
    return out


_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one acceptance line; the lines are echoed in the terminal summary."""

    def record(number: int, ok: bool, detail: str) -> bool:
        _ACCEPTANCE[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(_ACCEPTANCE[number])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
