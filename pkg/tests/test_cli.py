import json
import subprocess
import sys

import pytest

from sensenet.cli import main

FAST = ["--train.phase1_epochs", "1000", "--train.phase2_epochs", "400", "--train.early_stop", "50"]


@pytest.fixture
def p3(tmp_path):
    net = tmp_path / "p3.csv"
    net.write_text("0,1\n1,2\n")
    return net


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_load_check(p3, capsys):
    code, out, _ = run(["load-check", "--net", p3], capsys)
    assert code == 0 and json.loads(out) == {"nodes": 3, "links": 2, "connected": True}


def test_exit_codes(tmp_path, p3, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("0,1\n2,3\n")
    assert run(["load-check", "--net", bad], capsys)[0] == 1
    assert run(["load-check", "--net", tmp_path / "missing.csv"], capsys)[0] == 3
    assert run(["optimize", "--net", p3, "--opt.r_min", "oops", "--out", tmp_path / "a.json"],
               capsys)[0] == 1
    code, _, err = run(["pipeline", "--net", bad, "--out", tmp_path / "o"], capsys)
    assert code == 1 and "stage 'load'" in err


def test_stagewise_flow(tmp_path, p3, capsys):
    t = tmp_path
    assert run(["select", "--net", p3, "--out", t / "sel.json"], capsys)[0] == 0
    assert json.loads((t / "sel.json").read_text())["resistances"] is None
    code, out, _ = run(["optimize", "--net", p3, "--out", t / "assignment.json"], capsys)
    assert code == 0 and json.loads(out)["best_min_diff"] > 0
    assert run(["layout", "--net", p3, "--out", t / "layout0.json"], capsys)[0] == 0
    assert run(["adjust", "--net", p3, "--layout", t / "layout0.json", "--assignment",
                t / "assignment.json", "--out", t / "layout.json", "--report",
                t / "report.json"] + FAST, capsys)[0] == 0
    code, out, _ = run(["fabricate", "--layout", t / "layout.json", "--assignment",
                        t / "assignment.json", "--out", t / "fab"], capsys)
    assert code == 0 and json.loads(out)["traces"] == 2
    assert (t / "fab" / "conductive.stl").exists() and (t / "fab" / "layout_fabricated.json").exists()
    assert run(["fabricate", "--no-fit", "--layout", t / "layout.json", "--assignment",
                t / "assignment.json", "--out", t / "fab2"], capsys)[0] == 2
    assert run(["calibrate", "--assignment", t / "assignment.json", "--out", t / "calib.json"],
               capsys)[0] == 0
    calib = json.loads((t / "calib.json").read_text())
    assert calib["clock_period"] == 21e-9 and calib["node_ids"] == [0, 1, 2]

    d = calib["delays"][2]
    code, out, _ = run(["classify", "--calib", t / "calib.json", "--delay", f"{d * 1e6}us"], capsys)
    assert code == 0 and out.strip() == "2"
    code, out, _ = run(["classify", "--calib", t / "calib.json", "--delay", "0"], capsys)
    assert out.strip() == "none"

    script = t / "touches.csv"
    script.write_text("timestamp,node,duration\n0,1,2\n3,2,1\n5,none,1\n6,1,4\n")
    code, out, _ = run(["simulate", "--calib", t / "calib.json", "--script", script,
                        "--out", t / "log.csv"], capsys)
    assert code == 0 and json.loads(out)["order"] == [1, 2, 1]
    summary = json.loads((t / "log.summary.json").read_text())
    assert summary["dwell"] == {"1": 6.0, "2": 1.0}


def test_fabricate_material_file(tmp_path, p3, capsys):
    t = tmp_path
    run(["optimize", "--net", p3, "--out", t / "a.json"], capsys)
    run(["layout", "--net", p3, "--out", t / "l.json"], capsys)
    (t / "mat.cfg").write_text("res_per_length_xy = 200\nmaterial.res_per_length_z = 200\n")
    code, _, _ = run(["fabricate", "--layout", t / "l.json", "--assignment", t / "a.json",
                      "--material", t / "mat.cfg", "--out", t / "fab"], capsys)
    assert code == 0
    traces = json.loads((t / "fab" / "traces.json").read_text())["traces"]
    for tr in traces:
        assert tr["achieved_resistance"] == pytest.approx(tr["target_resistance"], rel=0.01)


def test_pipeline_and_eval_commands(tmp_path, p3, capsys):
    code, out, _ = run(["pipeline", "--net", p3, "--out", tmp_path / "run"] + FAST, capsys)
    assert code == 0 and json.loads(out)["primary_goal_met"]
    data = tmp_path / "nets"
    data.mkdir()
    (data / "p3.csv").write_text(p3.read_text())
    code, out, _ = run(["eval", "--dataset", data, "--out", tmp_path / "eval.csv",
                        "--stages", "optimize"], capsys)
    assert code == 0 and json.loads(out) == {"networks": 1, "failed": 0}


def test_console_entry_point(p3):
    res = subprocess.run([sys.executable, "-m", "sensenet.cli", "load-check", "--net", str(p3)],
                         capture_output=True, text=True)
    assert res.returncode == 0 and '"nodes": 3' in res.stdout
