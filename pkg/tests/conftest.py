import numpy as np
import pytest

from sensenet.network import build_network
from sensenet.selection import SpanningTree

ACCEPTANCE_LINES: list[str] = []


def random_tree_edges(n: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    return [(int(rng.integers(0, i)), i) for i in range(1, n)]


def random_tree(n: int, rng: np.random.Generator, second: bool = False) -> SpanningTree:
    """Random recursive tree; connection = lowest-id leaf (optionally a second leaf)."""
    edges = [tuple(sorted(e)) for e in random_tree_edges(n, rng)]
    deg = np.zeros(n, dtype=int)
    for u, v in edges:
        deg[u] += 1
        deg[v] += 1
    leaves = [int(i) for i in np.nonzero(deg == 1)[0]]
    conn2 = leaves[1] if second and len(leaves) > 1 else None
    return SpanningTree(n, edges, 0, leaves[0], conn2)


def random_connected(n: int, n_links: int, rng: np.random.Generator):
    edges = {tuple(sorted(e)) for e in random_tree_edges(n, rng)}
    while len(edges) < n_links:
        a, b = sorted(int(x) for x in rng.choice(n, 2, replace=False))
        edges.add((a, b))
    return build_network(list(range(n)), sorted(edges))


def star_tree(k: int) -> SpanningTree:
    """Center 0 wired as the connection node, leaves 1..k."""
    return SpanningTree(k + 1, [(0, i) for i in range(1, k + 1)], 0, 0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
