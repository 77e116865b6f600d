"""Initial 3D layouts: Fruchterman-Reingold or predefined positions."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .network import NetworkDataset, NetworkError

FORCE_DIRECTED = "force_directed"
PREDEFINED = "predefined"


@dataclass(frozen=True)
class LayoutConfig:
    mode: str = FORCE_DIRECTED
    iterations: int = 500
    ideal_edge_length: float = 17.0  # mm
    bounding_box: float = 100.0  # mm, side of the initial random cube
    rng_seed: int = 0
    node_radius: float = 6.0
    link_radius: float = 3.0

    def __post_init__(self):
        if self.mode not in (FORCE_DIRECTED, PREDEFINED):
            raise ValueError(f"unknown layout mode {self.mode}")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.ideal_edge_length <= 0:
            raise ValueError("ideal_edge_length must be positive")
        if not self.node_radius > self.link_radius > 0:
            raise ValueError("need node_radius > link_radius > 0")


@dataclass
class Layout3D:
    positions: np.ndarray  # (N, 3) mm
    node_radius: float = 6.0
    link_radius: float = 3.0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("layout positions must be finite")
        if not self.node_radius > self.link_radius > 0:
            raise ValueError("need node_radius > link_radius > 0")

    def link_lengths(self, edges) -> np.ndarray:
        edges = np.asarray(edges, dtype=int).reshape(-1, 2)
        return np.linalg.norm(self.positions[edges[:, 0]] - self.positions[edges[:, 1]], axis=1)

    def to_json(self) -> dict:
        return {
            "positions": [[float(x) for x in p] for p in self.positions],
            "node_radius": self.node_radius,
            "link_radius": self.link_radius,
        }

    @classmethod
    def from_json(cls, data: dict) -> "Layout3D":
        return cls(np.array(data["positions"], dtype=float), data["node_radius"], data["link_radius"])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "Layout3D":
        return cls.from_json(json.loads(Path(path).read_text()))


def fruchterman_reingold(n: int, edges, init: np.ndarray, iterations: int, k: float) -> np.ndarray:
    """3D Fruchterman-Reingold with a linearly cooled displacement cap."""
    pos = np.array(init, dtype=float)
    edges = np.asarray(edges, dtype=int).reshape(-1, 2)
    if n < 2:
        return pos
    spread = 2.0 * np.linalg.norm(pos - pos.mean(axis=0), axis=1).max()
    t0 = 0.1 * max(spread, k)
    for it in range(iterations):
        temp = t0 * (1.0 - it / iterations)
        delta = pos[:, None, :] - pos[None, :, :]
        dist = np.linalg.norm(delta, axis=-1)
        np.fill_diagonal(dist, 1.0)
        dist = np.maximum(dist, 1e-9)
        force = k * k / dist
        np.fill_diagonal(force, 0.0)
        disp = np.einsum("ij,ijk->ik", force / dist, delta)
        if len(edges):
            d = pos[edges[:, 0]] - pos[edges[:, 1]]
            length = np.maximum(np.linalg.norm(d, axis=1), 1e-9)
            pull = (length / k)[:, None] * d
            np.add.at(disp, edges[:, 0], -pull)
            np.add.at(disp, edges[:, 1], pull)
        norm = np.maximum(np.linalg.norm(disp, axis=1), 1e-12)
        pos += disp / norm[:, None] * np.minimum(norm, temp)[:, None]
    return pos


def scale_to_min_link(positions: np.ndarray, edges, min_length: float) -> np.ndarray:
    """Uniformly rescale about the centroid so the shortest link equals ``min_length``."""
    positions = positions - positions.mean(axis=0)
    if len(edges) == 0:
        return positions
    edges = np.asarray(edges, dtype=int).reshape(-1, 2)
    shortest = np.linalg.norm(positions[edges[:, 0]] - positions[edges[:, 1]], axis=1).min()
    if shortest <= 0:
        raise ValueError("layout has a zero-length link")
    return positions * (min_length / shortest)


def layout_force_directed(net: NetworkDataset, cfg: LayoutConfig = LayoutConfig(), init=None) -> Layout3D:
    rng = np.random.default_rng(cfg.rng_seed)
    if init is None:
        init = rng.uniform(-0.5, 0.5, (net.n_nodes, 3)) * cfg.bounding_box
    edges = net.edge_list()
    pos = fruchterman_reingold(net.n_nodes, edges, init, cfg.iterations, cfg.ideal_edge_length)
    pos = scale_to_min_link(pos, edges, cfg.ideal_edge_length)
    return Layout3D(pos, cfg.node_radius, cfg.link_radius)


def layout_predefined(net: NetworkDataset, cfg: LayoutConfig = LayoutConfig()) -> Layout3D:
    missing = [net.original_ids.get(n.id, n.id) for n in net.nodes if n.position is None]
    if missing:
        raise NetworkError(f"node {missing[0]} has no predefined position")
    return Layout3D(np.array([n.position for n in net.nodes]), cfg.node_radius, cfg.link_radius)


def make_layout(net: NetworkDataset, cfg: LayoutConfig = LayoutConfig()) -> Layout3D:
    if cfg.mode == PREDEFINED:
        return layout_predefined(net, cfg)
    return layout_force_directed(net, cfg)
