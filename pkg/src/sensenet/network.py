"""Network datasets: records, validation and file ingestion."""

from __future__ import annotations

import csv
import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional


class NetworkError(ValueError):
    """Raised when a dataset violates a structural invariant."""


@dataclass(frozen=True)
class NodeRecord:
    id: int
    position: Optional[tuple[float, float, float]] = None
    attributes: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class LinkRecord:
    source: int
    target: int

    def key(self) -> tuple[int, int]:
        return (min(self.source, self.target), max(self.source, self.target))


@dataclass(frozen=True)
class NetworkDataset:
    nodes: list[NodeRecord]
    links: list[LinkRecord]
    # dense id -> id found in the source file
    original_ids: dict[int, int] = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_links(self) -> int:
        return len(self.links)

    def edge_list(self) -> list[tuple[int, int]]:
        return [link.key() for link in self.links]

    def adjacency(self) -> dict[int, list[int]]:
        adj: dict[int, list[int]] = {node.id: [] for node in self.nodes}
        for link in self.links:
            adj[link.source].append(link.target)
            adj[link.target].append(link.source)
        for nbrs in adj.values():
            nbrs.sort()
        return adj

    def has_positions(self) -> bool:
        return all(node.position is not None for node in self.nodes)

    def to_json(self) -> dict:
        nodes = []
        for node in self.nodes:
            entry: dict = {"id": node.id}
            if node.position is not None:
                entry["pos"] = list(node.position)
            if node.attributes:
                entry["attrs"] = dict(node.attributes)
            nodes.append(entry)
        return {
            "nodes": nodes,
            "links": [{"source": l.source, "target": l.target} for l in self.links],
        }


def validate_connected(net: NetworkDataset) -> bool:
    """True iff the graph has exactly one connected component (BFS)."""
    if net.n_nodes == 0:
        return False
    adj = net.adjacency()
    start = net.nodes[0].id
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return len(seen) == net.n_nodes


def build_network(
    node_ids: list[int],
    edges: list[tuple[int, int]],
    positions: Optional[dict[int, tuple[float, ...]]] = None,
    attributes: Optional[dict[int, dict[str, str]]] = None,
    require_connected: bool = True,
) -> NetworkDataset:
    """Validate raw ids/edges and re-index them densely to 0..N-1.

    Dense ids follow ascending order of the original ids.
    """
    positions = positions or {}
    attributes = attributes or {}
    ids = list(node_ids)
    seen_ids: set[int] = set()
    for nid in ids:
        if not isinstance(nid, int) or isinstance(nid, bool) or nid < 0:
            raise NetworkError(f"node id must be a non-negative integer: {nid!r}")
        if nid in seen_ids:
            raise NetworkError(f"duplicate node id: {nid}")
        seen_ids.add(nid)

    dense = {orig: i for i, orig in enumerate(sorted(ids))}
    seen_links: set[tuple[int, int]] = set()
    links = []
    for s, t in edges:
        if s not in dense or t not in dense:
            missing = s if s not in dense else t
            raise NetworkError(f"dangling endpoint {missing} in link ({s}, {t})")
        if s == t:
            raise NetworkError(f"self-loop on node {s}")
        key = (min(s, t), max(s, t))
        if key in seen_links:
            raise NetworkError(f"duplicate link ({s}, {t})")
        seen_links.add(key)
        links.append(LinkRecord(dense[s], dense[t]))

    nodes = []
    for orig in sorted(ids):
        pos = positions.get(orig)
        if pos is not None:
            pos = tuple(float(x) for x in pos)
            if len(pos) == 2:
                pos = (pos[0], pos[1], 0.0)
            if len(pos) != 3 or not all(math.isfinite(x) for x in pos):
                raise NetworkError(f"invalid position for node {orig}: {pos}")
        nodes.append(NodeRecord(dense[orig], pos, dict(attributes.get(orig, {}))))

    net = NetworkDataset(nodes, links, {i: orig for orig, i in dense.items()})
    if require_connected and not validate_connected(net):
        raise NetworkError(
            f"graph is disconnected ({net.n_nodes} nodes, {net.n_links} links)"
        )
    return net


def _parse_json(text: str):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkError(f"JSON parse error: {exc}") from exc
    if not isinstance(data, dict) or "nodes" not in data or "links" not in data:
        raise NetworkError("JSON network needs 'nodes' and 'links' arrays")
    ids, positions, attributes, edges = [], {}, {}, []
    for entry in data["nodes"]:
        if isinstance(entry, int):
            entry = {"id": entry}
        if not isinstance(entry, dict) or "id" not in entry:
            raise NetworkError(f"malformed node entry: {entry!r}")
        nid = entry["id"]
        ids.append(nid)
        if entry.get("pos") is not None:
            positions[nid] = entry["pos"]
        if entry.get("attrs"):
            attributes[nid] = {str(k): str(v) for k, v in entry["attrs"].items()}
    for entry in data["links"]:
        try:
            edges.append((entry["source"], entry["target"]))
        except (KeyError, TypeError) as exc:
            raise NetworkError(f"malformed link entry: {entry!r}") from exc
    return ids, edges, positions, attributes


def _parse_csv(text: str):
    edges = []
    ids: list[int] = []
    seen: set[int] = set()
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    for lineno, row in enumerate(csv.reader(lines), start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != 2:
            raise NetworkError(f"line {lineno}: expected 'source,target', got {row!r}")
        try:
            s, t = int(row[0]), int(row[1])
        except ValueError as exc:
            raise NetworkError(f"line {lineno}: non-integer node id in {row!r}") from exc
        edges.append((s, t))
        for nid in (s, t):
            if nid not in seen:
                seen.add(nid)
                ids.append(nid)
    return ids, edges, {}, {}


def load_network(path, format: Optional[str] = None) -> NetworkDataset:
    """Load a network from JSON or a two-column CSV edge list.

    The format is inferred from the file suffix when not given.
    """
    path = Path(path)
    if format is None:
        format = "edge-csv" if path.suffix.lower() in (".csv", ".txt") else "json"
    text = path.read_text()
    if format == "json":
        ids, edges, positions, attributes = _parse_json(text)
    elif format in ("edge-csv", "csv"):
        ids, edges, positions, attributes = _parse_csv(text)
    else:
        raise ValueError(f"unknown network format: {format}")
    return build_network(ids, edges, positions, attributes)


def save_network(net: NetworkDataset, path) -> None:
    Path(path).write_text(json.dumps(net.to_json(), indent=2, sort_keys=True) + "\n")
