"""Triangle meshes for the printable solids and binary STL export."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fabrication import XY, FabricationModel, link_frame, save_traces

STL_RECORD = np.dtype([
    ("normal", "<f4", (3,)),
    ("v0", "<f4", (3,)),
    ("v1", "<f4", (3,)),
    ("v2", "<f4", (3,)),
    ("attr", "<u2"),
])


@dataclass
class Mesh:
    vertices: np.ndarray  # (V, 3)
    faces: np.ndarray  # (F, 3) int, counter-clockwise seen from outside

    def normals(self) -> np.ndarray:
        tri = self.vertices[self.faces]
        n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def edge_counts(self) -> dict:
        counts: dict = {}
        for f in self.faces:
            for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
                key = (min(a, b), max(a, b))
                counts[key] = counts.get(key, 0) + 1
        return counts

    def is_watertight(self) -> bool:
        return all(c == 2 for c in self.edge_counts().values())

    def euler_characteristic(self) -> int:
        return len(self.vertices) - len(self.edge_counts()) + len(self.faces)

    def volume(self) -> float:
        tri = self.vertices[self.faces]
        return float(np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2])).sum() / 6.0)


def icosphere(center, radius: float, subdivisions: int = 1) -> Mesh:
    """Subdivided icosahedron; one subdivision gives 80 faces."""
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
             (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
             (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
             (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
             (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
             (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache: dict = {}

        def midpoint(a: int, b: int) -> int:
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    v = np.asarray(center, dtype=float) + radius * np.array(verts)
    return Mesh(v, np.array(faces, dtype=int))


def _ring(center, u, v, radius: float, segments: int) -> np.ndarray:
    ang = 2 * np.pi * np.arange(segments) / segments
    return center + radius * (np.cos(ang)[:, None] * u + np.sin(ang)[:, None] * v)


def cylinder(start, end, radius: float, segments: int = 24) -> Mesh:
    start, end = np.asarray(start, dtype=float), np.asarray(end, dtype=float)
    axis, u, v = link_frame(start, end)
    bottom = _ring(start, u, v, radius, segments)
    top = _ring(end, u, v, radius, segments)
    verts = np.vstack([bottom, top, start, end])
    cb, ct = 2 * segments, 2 * segments + 1
    faces = []
    for i in range(segments):
        j = (i + 1) % segments
        faces += [(i, j, segments + j), (i, segments + j, segments + i)]
        faces += [(cb, j, i), (ct, segments + i, segments + j)]
    return Mesh(verts, np.array(faces, dtype=int))


def cone(base_center, apex, base_radius: float, segments: int = 24) -> Mesh:
    base_center, apex = np.asarray(base_center, dtype=float), np.asarray(apex, dtype=float)
    axis, u, v = link_frame(base_center, apex)
    ring = _ring(base_center, u, v, base_radius, segments)
    verts = np.vstack([ring, apex, base_center])
    ia, ib = segments, segments + 1
    faces = []
    for i in range(segments):
        j = (i + 1) % segments
        faces += [(i, j, ia), (ib, j, i)]
    return Mesh(verts, np.array(faces, dtype=int))


def box_segment(p, q, width: float, height: float, up) -> Mesh:
    """Closed rectangular sweep of one trace segment; ends extended by half the width."""
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    d = (q - p) / np.linalg.norm(q - p)
    up = np.asarray(up, dtype=float)
    up = up - d * (up @ d)
    if np.linalg.norm(up) < 1e-9:
        _, up, _ = link_frame(p, q)
    up = up / np.linalg.norm(up)
    side = np.cross(d, up)
    a, b = p - d * width / 2, q + d * width / 2
    hw, hh = side * width / 2, up * height / 2
    corners = [-hw - hh, hw - hh, hw + hh, -hw + hh]
    verts = np.array([a + c for c in corners] + [b + c for c in corners])
    faces = [(0, 1, 2), (0, 2, 3), (4, 6, 5), (4, 7, 6)]
    for i in range(4):
        j = (i + 1) % 4
        faces += [(i, 4 + j, j), (i, 4 + i, 4 + j)]
    return Mesh(verts, np.array(faces, dtype=int))


def trace_meshes(trace, mat, link_axis_w) -> list[Mesh]:
    """One closed box per polyline segment; xy segments are flat, z segments square."""
    out = []
    pts = trace.polyline
    for k, kind in enumerate(trace.segment_kinds):
        if kind == XY:
            out.append(box_segment(pts[k], pts[k + 1], mat.trace_width_xy, 2 * mat.layer_height,
                                   link_axis_w))
        else:
            out.append(box_segment(pts[k], pts[k + 1], mat.trace_width_z, mat.trace_width_z,
                                   np.cross(link_axis_w, pts[k + 1] - pts[k])))
    return out


def model_meshes(model: FabricationModel, segments: int = 24) -> tuple[list[Mesh], list[Mesh]]:
    """(conductive, nonconductive) closed shells."""
    conductive = [icosphere(s.center, s.radius) for s in model.spheres]
    for t in model.traces:
        i_pt, j_pt = t.polyline[0], t.polyline[-1]
        _, _, w = link_frame(i_pt, j_pt)
        conductive += trace_meshes(t, model.material, w)
    nonconductive = [cylinder(c.start, c.end, c.radius, segments) for c in model.cylinders]
    nonconductive += [cone(c.base_center, c.apex, c.base_radius, segments) for c in model.cones]
    return conductive, nonconductive


def stl_bytes(meshes: list[Mesh], header: str = "sensenet") -> bytes:
    tris = [m.vertices[m.faces] for m in meshes if len(m.faces)]
    tri = np.concatenate(tris) if tris else np.zeros((0, 3, 3))
    normals = [m.normals() for m in meshes if len(m.faces)]
    rec = np.zeros(len(tri), dtype=STL_RECORD)
    if len(tri):
        rec["normal"] = np.concatenate(normals)
        rec["v0"], rec["v1"], rec["v2"] = tri[:, 0], tri[:, 1], tri[:, 2]
    head = header.encode("ascii")[:80].ljust(80, b"\0")
    return head + np.array(len(rec), dtype="<u4").tobytes() + rec.tobytes()


def read_stl(path) -> np.ndarray:
    """Records of a binary STL file."""
    data = Path(path).read_bytes()
    n = int(np.frombuffer(data[80:84], dtype="<u4")[0])
    return np.frombuffer(data[84:84 + n * STL_RECORD.itemsize], dtype=STL_RECORD)


def export_meshes(model: FabricationModel, out_dir, segments: int = 24) -> dict:
    """Write conductive.stl, nonconductive.stl and traces.json; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    conductive, nonconductive = model_meshes(model, segments)
    paths = {
        "conductive": out / "conductive.stl",
        "nonconductive": out / "nonconductive.stl",
        "traces": out / "traces.json",
    }
    paths["conductive"].write_bytes(stl_bytes(conductive, "sensenet conductive"))
    paths["nonconductive"].write_bytes(stl_bytes(nonconductive, "sensenet nonconductive"))
    save_traces(model, paths["traces"])
    return paths
