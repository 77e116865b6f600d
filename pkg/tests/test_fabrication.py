import numpy as np
import pytest

from sensenet.adjust import conductive_intersections
from sensenet.circuit import CircuitSpec, delay_profile, profile_from_delays
from sensenet.fabrication import (XY, Z, CalibrationTable, FabricationError, MaterialProfile,
                                  ResistanceUnreachable, build_fabrication_model,
                                  calibration_table, link_frame, max_resistance,
                                  min_resistance, plan_serpentine, plan_serpentine_local,
                                  quantize_cycles, required_scale, scale_layout, save_traces)
from sensenet.layout import Layout3D
from sensenet.selection import SpanningTree, select_resistor_links

from conftest import random_connected

MAT = MaterialProfile()


def resample(polyline, step=0.1):
    out = [polyline[0]]
    for a, b in zip(polyline[:-1], polyline[1:]):
        n = max(1, int(np.ceil(np.linalg.norm(b - a) / step)))
        out.extend(a + (b - a) * t for t in np.linspace(0, 1, n + 1)[1:])
    return np.array(out)


def local_coords(trace, a, b, node_radius):
    u, v, w = link_frame(a, b)
    rel = resample(trace.polyline) - (np.asarray(a, float) + node_radius * u)
    return rel @ u, np.hypot(rel @ v, rel @ w)


# -- serpentine planning -----------------------------------------------------------------


def test_all_xy_trace_length_for_thirty_kilo_ohm():
    mat = MaterialProfile(res_per_length_xy=1500.0, res_per_length_z=1500.0)
    pts, kinds, k, _ = plan_serpentine_local(10.0, 3.0, 30e3, mat)
    assert k == 1 and set(kinds) == {XY}
    assert np.linalg.norm(np.diff(pts, axis=0), axis=1).sum() == pytest.approx(20.0, rel=1e-9)


def test_zero_target_rejected_with_floor():
    with pytest.raises(ResistanceUnreachable) as exc:
        plan_serpentine_local(10.0, 3.0, 0.0)
    assert exc.value.limit == pytest.approx(min_resistance(10.0))


def test_unreachable_target_carries_maximum():
    with pytest.raises(ResistanceUnreachable) as exc:
        plan_serpentine_local(10.0, 3.0, 1e7)
    assert exc.value.limit == pytest.approx(max_resistance(10.0, 3.0))
    with pytest.raises(FabricationError):
        plan_serpentine_local(0.0, 3.0, 1e3)


def test_seventeen_mm_cylinder_holds_thirty_kilo_ohm():
    assert max_resistance(17.0, 3.0) >= 30.3e3
    assert max_resistance(16.0, 3.0) < 30.3e3


def test_max_resistance_edge_cases():
    assert max_resistance(0.0, 3.0) == 0.0
    # too thin for any serpentine: a straight trace is the only option
    assert max_resistance(10.0, 0.3) == pytest.approx(min_resistance(10.0))
    with pytest.raises(ValueError):
        max_resistance(10.0, 0.0)


def test_max_resistance_linear_in_length():
    lengths = np.linspace(10, 100, 19)
    r = np.array([max_resistance(x, 3.0) for x in lengths])
    fit = np.polyval(np.polyfit(lengths, r, 1), lengths)
    r2 = 1 - ((r - fit) ** 2).sum() / ((r - r.mean()) ** 2).sum()
    assert r2 >= 0.99
    assert max_resistance(40.0, 3.0) / max_resistance(20.0, 3.0) == pytest.approx(2.0, rel=0.05)


def test_max_resistance_monotone():
    lengths = np.linspace(0, 60, 121)
    assert np.all(np.diff([max_resistance(x, 3.0) for x in lengths]) >= 0)
    radii = np.linspace(0.3, 8, 78)
    assert np.all(np.diff([max_resistance(20.0, r) for r in radii]) >= -1e-9)


def test_random_targets_within_one_percent_and_inside_cylinder(rng):
    a, b = np.array([0.0, 0.0, 0.0]), np.array([20.0, 25.0, -10.0])
    length = np.linalg.norm(b - a) - 12.0
    lo, hi = min_resistance(length), max_resistance(length, 3.0)
    usable = 3.0 - MAT.wall_margin
    for target in rng.uniform(lo, hi, 100):
        tr = plan_serpentine(a, b, 6.0, 3.0, target)
        assert tr.resistance(MAT) == pytest.approx(target, rel=0.01)
        assert tr.achieved_resistance == pytest.approx(tr.resistance(MAT))
        u, radial = local_coords(tr, a, b, 6.0)
        assert radial.max() <= usable + 1e-9
        assert u.min() >= -1e-9 and u.max() <= length + 1e-9


def test_endpoints_on_sphere_surfaces():
    a, b = np.array([1.0, 2.0, 3.0]), np.array([1.0, 32.0, 3.0])
    tr = plan_serpentine(a, b, 6.0, 3.0, 25e3)
    assert np.linalg.norm(tr.polyline[0] - a) == pytest.approx(6.0)
    assert np.linalg.norm(tr.polyline[-1] - b) == pytest.approx(6.0)


def test_z_segments_use_z_resistivity():
    mat = MaterialProfile(res_per_length_z=500.0)
    tr = plan_serpentine([0, 0, 0], [0, 0, 60.0], 6.0, 3.0, max_resistance(48.0, 3.0, mat) * 0.99,
                         mat)
    assert tr.n_layers > 1 and Z in tr.segment_kinds
    pts = tr.polyline
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    kinds = np.array(tr.segment_kinds)
    expected = seg[kinds == XY].sum() * mat.res_per_length_xy + seg[kinds == Z].sum() * 500.0
    assert tr.achieved_resistance == pytest.approx(expected)


def test_material_validation():
    with pytest.raises(ValueError):
        MaterialProfile(trace_width_z=0.5)
    with pytest.raises(ValueError):
        MaterialProfile(layer_height=0)


# -- models -----------------------------------------------------------------------------------


def test_two_node_model_counts(tmp_path):
    layout = Layout3D(np.array([[0, 0, 0], [30.0, 0, 0]]))
    tree = SpanningTree(2, [(0, 1)], 0, 0)
    model = build_fabrication_model(layout, [(0, 1)], tree, [5e3])
    assert model.summary() == {"spheres": 2, "cylinders": 1, "cones": 2, "traces": 1}
    cone = model.cones[0]
    assert cone.base_radius == pytest.approx(4.5) and cone.height == pytest.approx(3.0)
    assert model.cylinders[0].resistor
    save_traces(model, tmp_path / "t.json")
    assert '"segment_kinds"' in (tmp_path / "t.json").read_text()


def test_twenty_node_forty_link_counts():
    rng = np.random.default_rng(5)
    net = random_connected(20, 40, rng)
    tree = select_resistor_links(net)
    for _ in range(50):
        layout = Layout3D(rng.uniform(-400, 400, (20, 3)))
        if conductive_intersections(layout, net.edge_list(), tree.edges) == (0.0, 0.0):
            break
    r = [0.5 * (min_resistance(layout.link_lengths([e])[0] - 12) +
                max_resistance(layout.link_lengths([e])[0] - 12, 3.0)) for e in tree.edges]
    model = build_fabrication_model(layout, net.edge_list(), tree, r)
    assert model.summary() == {"spheres": 20, "cylinders": 40, "cones": 80, "traces": 19}
    assert sum(c.resistor for c in model.cylinders) == 19


def test_refuses_intersecting_layout():
    layout = Layout3D(np.array([[-20, 0, 0], [20, 0, 0], [0, -20, 1], [0, 20, 1.0]]))
    tree = SpanningTree(4, [(0, 1), (1, 2), (2, 3)], 0, 0)
    with pytest.raises(FabricationError, match="intersection"):
        build_fabrication_model(layout, [(0, 1), (1, 2), (2, 3)], tree, [1e4] * 3)


def test_unreachable_target_names_link():
    layout = Layout3D(np.array([[0, 0, 0], [30.0, 0, 0]]))
    tree = SpanningTree(2, [(0, 1)], 0, 0)
    with pytest.raises(FabricationError, match=r"link \(0, 1\)"):
        build_fabrication_model(layout, [(0, 1)], tree, [1e7])


def test_required_scale_makes_targets_fit():
    layout = Layout3D(np.array([[0, 0, 0], [17.0, 0, 0], [17.0, 17.0, 0]]))
    tree = SpanningTree(3, [(0, 1), (1, 2)], 0, 0)
    r = [100e3, 300e3]
    s = required_scale(layout, tree, r)
    assert s > 1
    big = scale_layout(layout, s)
    for e, target in zip(tree.edges, r):
        d = big.link_lengths([e])[0] - 12.0
        assert max_resistance(d, 3.0) >= target
    assert build_fabrication_model(big, tree.edges, tree, r).summary()["traces"] == 2
    assert required_scale(big, tree, r) == pytest.approx(1.0)


# -- calibration --------------------------------------------------------------------------------


@pytest.mark.parametrize("delay,cycles", [(2.1e-6, [100]), (0.8e-6, [38]), (7.4e-6, range(352, 356))])
def test_cycle_quantization(delay, cycles):
    assert int(quantize_cycles(delay, 21e-9)) in cycles


def test_sixteen_mhz_clock_precision():
    assert int(quantize_cycles(2.1e-6, 62e-9)) == 34
    # a 20 ns separation vanishes under a 62 ns clock
    table = calibration_table(profile_from_delays([2.10e-6, 2.12e-6]), 62e-9)
    assert table.ambiguous


def test_calibration_table_from_profile(tmp_path):
    spec = CircuitSpec(send_resistance=0)
    tree = SpanningTree(3, [(0, 1), (1, 2)], 0, 0)
    prof = delay_profile(tree, [30.3e3, 30.3e3], spec)
    table = calibration_table(prof, 21e-9, node_ids=[10, 11, 12])
    assert table.cycles.tolist() == [0, 100, 200]
    assert table.min_margin == pytest.approx(prof.min_diff)
    assert table.min_margin_cycles == 100 and not table.ambiguous
    assert table.label(2) == 12
    table.save(tmp_path / "c.json")
    back = CalibrationTable.load(tmp_path / "c.json")
    assert back.to_json() == table.to_json()
    with pytest.raises(ValueError):
        calibration_table(prof, 0.0)


def test_required_scale_clears_row_step():
    # with 200 ohm/mm a 300 kOhm target sits right at a row-count step
    mat = MaterialProfile(res_per_length_xy=200.0, res_per_length_z=200.0)
    layout = Layout3D(np.array([[1.753981899530676, -11.176795178072673, -12.70349223212897],
                                [0.0011396376400067756, -0.007262045567865835, -0.008254006447368959],
                                [-1.7551215371706859, 11.184057223640542, 12.711746238576337]]))
    tree = SpanningTree(3, [(0, 1), (1, 2)], 0, 0)
    big = scale_layout(layout, required_scale(layout, tree, [300e3, 300e3], mat))
    model = build_fabrication_model(big, tree.edges, tree, [300e3, 300e3], mat)
    assert len(model.traces) == 2
