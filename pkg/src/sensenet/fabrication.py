"""Fabrication geometry: serpentine resistor traces, printable solids and the calibration table.

Traces are planned in a link-local frame (u along the link, v and w across it).
Each layer is a square wave across the link in the v direction; layers are stacked
along w and joined by short w-direction connectors. Segments along u or v are "xy"
segments, segments along w are "z" segments, each with its own ohms-per-mm.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .adjust import conductive_intersections
from .circuit import DelayProfile
from .layout import Layout3D
from .selection import SpanningTree

XY = "xy"
Z = "z"


class FabricationError(ValueError):
    pass


class ResistanceUnreachable(FabricationError):
    def __init__(self, target: float, limit: float, kind: str = "max"):
        self.target = target
        self.limit = limit
        word = "exceeds the maximum" if kind == "max" else "is below the minimum"
        super().__init__(f"target {target:.6g} ohm {word} achievable {limit:.6g} ohm")


@dataclass(frozen=True)
class MaterialProfile:
    # placeholder calibration; measure ohms-per-mm for the actual filament and printer
    res_per_length_xy: float = 85.1  # ohm/mm
    res_per_length_z: float = 85.1  # ohm/mm
    trace_width_xy: float = 0.4  # mm
    trace_width_z: float = 0.8  # mm
    layer_height: float = 0.2  # mm

    def __post_init__(self):
        for name in ("res_per_length_xy", "res_per_length_z", "trace_width_xy",
                     "trace_width_z", "layer_height"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.trace_width_z < 2 * self.trace_width_xy:
            raise ValueError("trace_width_z must be at least twice trace_width_xy")

    @property
    def row_pitch(self) -> float:
        """Spacing between neighbouring square-wave rows (one trace width of gap)."""
        return 2.0 * self.trace_width_xy

    @property
    def layer_pitch(self) -> float:
        return 2.0 * self.trace_width_z

    @property
    def wall_margin(self) -> float:
        return self.trace_width_xy


# ---------------------------------------------------------------------------
# serpentine planning in the link-local frame
# ---------------------------------------------------------------------------


def _layer_offsets(n_layers: int, pitch: float) -> np.ndarray:
    return (np.arange(n_layers) - (n_layers - 1) / 2.0) * pitch


def _max_layers(radius: float, mat: MaterialProfile) -> int:
    """Largest odd layer count whose outer layers stay inside the usable radius."""
    usable = radius - mat.wall_margin
    if usable <= 0:
        return 1
    k = 1
    while (k + 1) / 2.0 * mat.layer_pitch <= usable:
        k += 2
    return k


def _row_positions(length: float, mat: MaterialProfile) -> np.ndarray:
    """u coordinates of the square-wave rows, kept one wall margin from both ends."""
    lo, hi = mat.wall_margin, length - mat.wall_margin
    if hi < lo:
        return np.zeros(0)
    n = int(math.floor((hi - lo) / mat.row_pitch + 1e-9)) + 1
    return lo + mat.row_pitch * np.arange(n)


def _layer_path(length: float, rows: np.ndarray, amplitude: float, w: float, forward: bool):
    """Local (u, v, w) points for one layer, from one end of the link to the other."""
    pts = [(0.0, 0.0, w)]
    n = len(rows)
    for j, u in enumerate(rows):
        side = amplitude if j % 2 == 0 else -amplitude
        start = 0.0 if j == 0 else -side
        end = 0.0 if j == n - 1 else side
        pts.append((u, start, w))
        pts.append((u, end, w))
    pts.append((length, 0.0, w))
    pts = np.array(pts, dtype=float)
    if not forward:
        pts = pts[::-1].copy()
        pts[:, 0] = length - pts[:, 0]
    return pts


def _local_polyline(length: float, radius: float, mat: MaterialProfile, n_layers: int,
                    scale: float):
    """Full trace in local coordinates plus per-segment kinds."""
    usable = max(0.0, radius - mat.wall_margin)
    rows = _row_positions(length, mat)
    offsets = _layer_offsets(n_layers, mat.layer_pitch)
    points = [np.zeros((1, 3))]
    for k, w in enumerate(offsets):
        amp = scale * math.sqrt(max(0.0, usable * usable - w * w))
        forward = k % 2 == 0
        layer = _layer_path(length, rows, amp, w, forward)
        # w-direction connector from the previous end point (or the axis) onto this layer
        points.append(layer)
    end = np.array([[length, 0.0, 0.0]])
    points.append(end)
    pts = np.concatenate(points)
    keep = np.ones(len(pts), dtype=bool)
    keep[1:] = np.any(np.abs(np.diff(pts, axis=0)) > 1e-12, axis=1)
    pts = pts[keep]
    kinds = [Z if abs(b[2] - a[2]) > 1e-12 else XY for a, b in zip(pts[:-1], pts[1:])]
    return pts, kinds


def _polyline_resistance(pts: np.ndarray, kinds, mat: MaterialProfile) -> float:
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    rho = np.array([mat.res_per_length_z if k == Z else mat.res_per_length_xy for k in kinds])
    return float((seg * rho).sum())


def _resistance_range(length: float, radius: float, mat: MaterialProfile, n_layers: int):
    lo = _polyline_resistance(*_local_polyline(length, radius, mat, n_layers, 0.0), mat)
    hi = _polyline_resistance(*_local_polyline(length, radius, mat, n_layers, 1.0), mat)
    return lo, hi


def max_resistance(length: float, radius: float, mat: MaterialProfile = MaterialProfile()) -> float:
    """Resistance of the densest legal serpentine in a cylinder of the given size."""
    if length <= 0:
        return 0.0
    if radius <= 0:
        raise ValueError("radius must be positive")
    return _resistance_range(length, radius, mat, _max_layers(radius, mat))[1]


def min_resistance(length: float, mat: MaterialProfile = MaterialProfile()) -> float:
    """A straight single-layer trace."""
    return length * mat.res_per_length_xy


@dataclass
class TraceGeometry:
    link: tuple[int, int]
    polyline: np.ndarray  # (M, 3) mm, world frame
    segment_kinds: list[str]
    achieved_resistance: float
    target_resistance: float
    n_layers: int
    amplitude_scale: float

    def resistance(self, mat: MaterialProfile) -> float:
        return _polyline_resistance(self.polyline, self.segment_kinds, mat)

    def to_json(self) -> dict:
        return {
            "link": list(self.link),
            "polyline": [[float(x) for x in p] for p in self.polyline],
            "segment_kinds": list(self.segment_kinds),
            "achieved_resistance": self.achieved_resistance,
            "target_resistance": self.target_resistance,
            "n_layers": self.n_layers,
            "amplitude_scale": self.amplitude_scale,
        }


def link_frame(a, b) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Orthonormal (u, v, w) with u from a to b; v is built from the least-aligned world axis."""
    u = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    n = np.linalg.norm(u)
    if n == 0:
        raise FabricationError("zero-length link")
    u = u / n
    helper = np.eye(3)[int(np.argmin(np.abs(u)))]
    v = np.cross(u, helper)
    v /= np.linalg.norm(v)
    w = np.cross(u, v)
    return u, v, w


def plan_serpentine_local(length: float, radius: float, target: float,
                          mat: MaterialProfile = MaterialProfile()):
    """Pick the fewest odd layers that can hit ``target`` and solve the row amplitude.

    Resistance is affine in the amplitude scale, so the scale is solved exactly.
    Returns (local points, kinds, n_layers, scale).
    """
    if length <= 0:
        raise FabricationError("link has no room for a trace")
    floor = min_resistance(length, mat)
    if not target >= floor * (1 - 1e-12):
        raise ResistanceUnreachable(target, floor, kind="min")
    k_max = _max_layers(radius, mat)
    for k in range(1, k_max + 1, 2):
        lo, hi = _resistance_range(length, radius, mat, k)
        if lo <= target * (1 + 1e-12) and target <= hi * (1 + 1e-12):
            scale = 0.0 if hi == lo else min(1.0, max(0.0, (target - lo) / (hi - lo)))
            pts, kinds = _local_polyline(length, radius, mat, k, scale)
            return pts, kinds, k, scale
    raise ResistanceUnreachable(target, max_resistance(length, radius, mat))


def plan_serpentine(a, b, node_radius: float, link_radius: float, target: float,
                    mat: MaterialProfile = MaterialProfile(), link=(0, 1)) -> TraceGeometry:
    """Trace between the two node spheres' surfaces along the link axis."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    u, v, w = link_frame(a, b)
    length = float(np.linalg.norm(b - a)) - 2.0 * node_radius
    pts, kinds, k, scale = plan_serpentine_local(length, link_radius, target, mat)
    origin = a + node_radius * u
    world = origin + pts[:, :1] * u + pts[:, 1:2] * v + pts[:, 2:3] * w
    trace = TraceGeometry(tuple(int(x) for x in link), world, kinds, 0.0, float(target), k, scale)
    trace.achieved_resistance = trace.resistance(mat)
    return trace


def exposed_length(layout: Layout3D, link) -> float:
    """Cylinder length between the two node spheres."""
    i, j = link
    return float(np.linalg.norm(layout.positions[i] - layout.positions[j]) - 2 * layout.node_radius)


def required_scale(layout: Layout3D, tree: SpanningTree, resistances,
                   mat: MaterialProfile = MaterialProfile()) -> float:
    """Smallest uniform enlargement (>= 1) after which every target fits its link."""
    need = 1.0
    for (i, j), target in zip(tree.edges, resistances):
        d = float(np.linalg.norm(layout.positions[i] - layout.positions[j]))
        if max_resistance(d - 2 * layout.node_radius, layout.link_radius, mat) >= target:
            continue
        lo, hi = d, 2.0 * d
        while max_resistance(hi - 2 * layout.node_radius, layout.link_radius, mat) < target:
            lo, hi = hi, 2.0 * hi
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if max_resistance(mid - 2 * layout.node_radius, layout.link_radius, mat) >= target:
                hi = mid
            else:
                lo = mid
        # max_resistance steps up when a row fits; stay clear of the step after rescaling
        need = max(need, hi / d * (1 + 1e-9))
    return need


def scale_layout(layout: Layout3D, factor: float) -> Layout3D:
    """Uniform enlargement about the centroid; fixed-size solids only move further apart."""
    c = layout.positions.mean(axis=0)
    return Layout3D(c + (layout.positions - c) * factor, layout.node_radius, layout.link_radius)


# ---------------------------------------------------------------------------
# solids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]
    radius: float


@dataclass(frozen=True)
class Cylinder:
    start: tuple[float, float, float]
    end: tuple[float, float, float]
    radius: float
    resistor: bool


@dataclass(frozen=True)
class Cone:
    base_center: tuple[float, float, float]
    apex: tuple[float, float, float]
    base_radius: float

    @property
    def height(self) -> float:
        return float(np.linalg.norm(np.subtract(self.apex, self.base_center)))


@dataclass
class FabricationModel:
    spheres: list[Sphere]
    cylinders: list[Cylinder]
    cones: list[Cone]
    traces: list[TraceGeometry]
    material: MaterialProfile = field(default_factory=MaterialProfile)

    @property
    def conductive(self) -> dict:
        return {"spheres": self.spheres, "traces": self.traces}

    @property
    def nonconductive(self) -> dict:
        return {"cylinders": self.cylinders, "cones": self.cones}

    def summary(self) -> dict:
        return {
            "spheres": len(self.spheres),
            "cylinders": len(self.cylinders),
            "cones": len(self.cones),
            "traces": len(self.traces),
        }


def _tuple(p) -> tuple[float, float, float]:
    return tuple(float(x) for x in p)


def build_fabrication_model(layout: Layout3D, edges, tree: SpanningTree, resistances,
                            mat: MaterialProfile = MaterialProfile(),
                            cone_base_factor: float = 1.5, cone_height_factor: float = 1.0
                            ) -> FabricationModel:
    """Spheres, link cylinders, junction cones and one serpentine per resistor link.

    Refuses layouts that still have conductive intersections.
    """
    edges = [tuple(sorted(e)) for e in edges]
    res_edges = [tuple(sorted(e)) for e in tree.edges]
    resistances = np.asarray(resistances, dtype=float)
    if len(resistances) != len(res_edges):
        raise FabricationError("one resistance per resistor link is required")
    j_res, j_node = conductive_intersections(layout, edges, res_edges)
    if j_res > 0 or j_node > 0:
        raise FabricationError(
            f"layout has conductive intersections (links {j_res:.4g} mm, nodes {j_node:.4g} mm)")

    pos = layout.positions
    rn, rl = layout.node_radius, layout.link_radius
    spheres = [Sphere(_tuple(p), rn) for p in pos]
    res_set = set(res_edges)
    cylinders, cones = [], []
    for i, j in edges:
        cylinders.append(Cylinder(_tuple(pos[i]), _tuple(pos[j]), rl, (i, j) in res_set))
        u = (pos[j] - pos[i]) / np.linalg.norm(pos[j] - pos[i])
        for center, direction in ((pos[i], u), (pos[j], -u)):
            base = center + direction * rn
            apex = base + direction * (cone_height_factor * rl)
            cones.append(Cone(_tuple(base), _tuple(apex), cone_base_factor * rl))
    traces = []
    for (i, j), target in zip(res_edges, resistances):
        try:
            traces.append(plan_serpentine(pos[i], pos[j], rn, rl, float(target), mat, link=(i, j)))
        except ResistanceUnreachable as exc:
            raise FabricationError(f"link ({i}, {j}): {exc}") from exc
    return FabricationModel(spheres, cylinders, cones, traces, mat)


def save_traces(model: FabricationModel, path) -> None:
    data = {"traces": [t.to_json() for t in model.traces]}
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# calibration
# ---------------------------------------------------------------------------


@dataclass
class CalibrationTable:
    delays: np.ndarray  # seconds, indexed by dense node id
    cycles: np.ndarray
    clock_period: float
    min_margin: float  # seconds
    min_margin_cycles: int
    ambiguous: bool
    node_ids: Optional[list[int]] = None  # original ids, for reporting

    def label(self, node: int) -> int:
        return node if self.node_ids is None else self.node_ids[node]

    def to_json(self) -> dict:
        return {
            "clock_period": self.clock_period,
            "delays": [float(x) for x in self.delays],
            "cycles": [int(x) for x in self.cycles],
            "min_margin": None if math.isinf(self.min_margin) else float(self.min_margin),
            "min_margin_cycles": self.min_margin_cycles,
            "ambiguous": self.ambiguous,
            "node_ids": self.node_ids,
        }

    @classmethod
    def from_json(cls, data: dict) -> "CalibrationTable":
        mm = data.get("min_margin")
        return cls(np.array(data["delays"], dtype=float), np.array(data["cycles"], dtype=int),
                   float(data["clock_period"]), math.inf if mm is None else float(mm),
                   int(data["min_margin_cycles"]), bool(data["ambiguous"]), data.get("node_ids"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "CalibrationTable":
        return cls.from_json(json.loads(Path(path).read_text()))


def quantize_cycles(delay_s, clock_period: float):
    return np.rint(np.asarray(delay_s, dtype=float) / clock_period).astype(int)


def calibration_table(profile: DelayProfile, clock_period: float,
                      node_ids: Optional[list[int]] = None) -> CalibrationTable:
    """Quantize each node's predicted delay to whole clock cycles.

    ``ambiguous`` is set when two nodes land on the same cycle count.
    """
    if clock_period <= 0:
        raise ValueError("clock_period must be positive")
    delays = np.asarray(profile.delays, dtype=float)
    cycles = quantize_cycles(delays, clock_period)
    n = len(cycles)
    if n >= 2:
        cyc_gap = np.abs(cycles[:, None] - cycles[None, :])[np.triu_indices(n, k=1)]
        margin_cycles = int(cyc_gap.min())
    else:
        margin_cycles = 0
    return CalibrationTable(delays, cycles, float(clock_period), float(profile.min_diff),
                            margin_cycles, n >= 2 and margin_cycles == 0, node_ids)
