"""Resistor-link selection via repeated depth-first search."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Optional

from .network import NetworkDataset


@dataclass(frozen=True)
class SpanningTree:
    n_nodes: int
    edges: list[tuple[int, int]]
    root: int
    connection_node: int
    # optional second connection leaf, shorted to the first by the external circuit
    second_connection: Optional[int] = None

    def degrees(self) -> list[int]:
        deg = [0] * self.n_nodes
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    def neighbors(self) -> list[list[tuple[int, int]]]:
        """Per node, sorted list of (neighbor, edge index)."""
        nbrs: list[list[tuple[int, int]]] = [[] for _ in range(self.n_nodes)]
        for k, (u, v) in enumerate(self.edges):
            nbrs[u].append((v, k))
            nbrs[v].append((u, k))
        for lst in nbrs:
            lst.sort()
        return nbrs

    def leaves(self) -> list[int]:
        return [i for i, d in enumerate(self.degrees()) if d == 1]

    def connection_nodes(self) -> tuple[int, ...]:
        if self.second_connection is None:
            return (self.connection_node,)
        return (self.connection_node, self.second_connection)

    def to_json(self) -> dict:
        return {
            "edges": [list(e) for e in self.edges],
            "root": self.root,
            "connection_node": self.connection_node,
            "second_connection": self.second_connection,
            "branch_metric": branch_metric(self),
        }

    @classmethod
    def from_json(cls, data: dict, n_nodes: int) -> "SpanningTree":
        return cls(
            n_nodes,
            [tuple(e) for e in data["edges"]],
            data["root"],
            data["connection_node"],
            data.get("second_connection"),
        )


def branch_metric(tree: SpanningTree) -> int:
    return sum(max(0, d - 2) for d in tree.degrees())


def _lowest_leaf(n_nodes: int, edges: list[tuple[int, int]]) -> int:
    if n_nodes == 1:
        return 0
    deg = Counter()
    for u, v in edges:
        deg[u] += 1
        deg[v] += 1
    return min(i for i in range(n_nodes) if deg[i] == 1)


def dfs_spanning_tree(net: NetworkDataset, start: int) -> SpanningTree:
    """DFS tree from ``start``; neighbors are visited in ascending id order."""
    if not 0 <= start < net.n_nodes:
        raise ValueError(f"invalid start node {start}")
    adj = net.adjacency()
    visited = [False] * net.n_nodes
    visited[start] = True
    edges = []
    stack = [(start, iter(adj[start]))]
    while stack:
        u, it = stack[-1]
        for v in it:
            if not visited[v]:
                visited[v] = True
                edges.append((min(u, v), max(u, v)))
                stack.append((v, iter(adj[v])))
                break
        else:
            stack.pop()
    if not all(visited):
        raise ValueError("network is not connected")
    return SpanningTree(net.n_nodes, edges, start, _lowest_leaf(net.n_nodes, edges))


def select_resistor_links(net: NetworkDataset) -> SpanningTree:
    """Run DFS from every node and keep the tree with the fewest branches."""
    best = None
    best_metric = None
    for start in range(net.n_nodes):
        tree = dfs_spanning_tree(net, start)
        metric = branch_metric(tree)
        if best is None or metric < best_metric:
            best, best_metric = tree, metric
    return best


def with_connection(tree: SpanningTree, connection_node: int,
                    second_connection: Optional[int] = None) -> SpanningTree:
    return SpanningTree(tree.n_nodes, list(tree.edges), tree.root,
                        connection_node, second_connection)
