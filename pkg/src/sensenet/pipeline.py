"""End-to-end pipeline, artifact I/O and the scalability harness."""

from __future__ import annotations

import csv
import hashlib
import json
import platform
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path
from typing import Optional

import numpy as np

from .adjust import AdjustmentReport, DegenerateLayout, adjust_layout, save_report
from .circuit import CircuitSpec, delay_profile
from .config import PipelineConfig, config_json
from .fabrication import (FabricationError, build_fabrication_model,
                          calibration_table, required_scale, scale_layout)
from .layout import make_layout
from .mesh import export_meshes
from .network import NetworkDataset, load_network, save_network
from .optimize import OptimizationTrace, optimize
from .selection import SpanningTree, branch_metric, select_resistor_links

VERSION = "0.1.0"

# exit-code categories
VALIDATION, GOAL, IO = "validation", "goal", "io"
EXIT_CODES = {VALIDATION: 1, GOAL: 2, IO: 3}


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException, category: str):
        self.stage = stage
        self.cause = cause
        self.category = category
        super().__init__(f"stage '{stage}' failed: {cause}")

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.category]


class GoalNotMet(RuntimeError):
    pass


def categorize(exc: BaseException) -> str:
    if isinstance(exc, (GoalNotMet, FabricationError, DegenerateLayout)):
        return GOAL
    if isinstance(exc, OSError):
        return IO
    return VALIDATION


def write_json(path, data) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


# ---------------------------------------------------------------------------
# assignment.json
# ---------------------------------------------------------------------------


def assignment_json(net: NetworkDataset, tree: SpanningTree, resistances=None,
                    spec: Optional[CircuitSpec] = None,
                    trace: Optional[OptimizationTrace] = None) -> dict:
    data = {
        "n_nodes": net.n_nodes,
        "node_ids": [net.original_ids.get(i, i) for i in range(net.n_nodes)],
        "links": [list(e) for e in net.edge_list()],
        "tree": tree.to_json(),
        "resistances": None,
        "delay_profile": None,
        "optimization": None,
    }
    if resistances is not None:
        r = np.asarray(resistances, dtype=float)
        data["resistances"] = [float(x) for x in r]
        if spec is not None:
            data["circuit"] = asdict(spec)
            data["delay_profile"] = delay_profile(tree, r, spec).to_json()
        if trace is not None:
            data["optimization"] = trace.summary()
    return data


def load_assignment(path) -> tuple[SpanningTree, Optional[np.ndarray], dict]:
    data = read_json(path)
    tree = SpanningTree.from_json(data["tree"], data["n_nodes"])
    r = data.get("resistances")
    return tree, None if r is None else np.array(r, dtype=float), data


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _versions() -> dict:
    import torch

    return {"sensenet": VERSION, "python": platform.python_version(),
            "numpy": np.__version__, "torch": torch.__version__}


class _Stages:
    """Runs named stages, recording wall-clock and wrapping failures."""

    def __init__(self):
        self.timings: dict[str, float] = {}

    def run(self, name, fn, *args, **kwargs):
        t0 = time.perf_counter()
        try:
            return fn(*args, **kwargs)
        except StageError:
            raise
        except Exception as exc:  # noqa: BLE001 -- every failure is reported with its stage
            raise StageError(name, exc, categorize(exc)) from exc
        finally:
            self.timings[name] = time.perf_counter() - t0


def _adjust_track(stages: _Stages, net: NetworkDataset, tree: SpanningTree, cfg: PipelineConfig):
    initial = stages.run("layout", make_layout, net, cfg.layout)
    adjusted, report = stages.run("adjust", adjust_layout, initial, net.edge_list(), tree.edges,
                                  cfg.loss_weights, cfg.train)
    return initial, adjusted, report


def _check_goal(report: AdjustmentReport) -> None:
    if not report.primary_goal_met:
        raise GoalNotMet(f"conductive intersections remain (links {report.j_int_res:.4g} mm, "
                         f"nodes {report.j_int_node:.4g} mm)")


def run_pipeline(net_path, cfg: PipelineConfig, out_dir, net_format: Optional[str] = None) -> dict:
    """select, then optimize in parallel with layout -> adjust, then fabricate and calibrate.

    Returns the manifest. On failure a ``.partial`` marker naming the stage is
    written next to whatever artifacts were produced, and StageError is raised.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    marker = out / ".partial"
    marker.write_text("running\n")
    stages = _Stages()
    artifacts: dict[str, str] = {}

    def emit(name: str, path: Path) -> None:
        artifacts[name] = path.name

    try:
        net = stages.run("load", load_network, net_path, net_format)
        stages.run("write", save_network, net, out / "network.json")
        emit("network", out / "network.json")
        tree = stages.run("select", select_resistor_links, net)

        with ThreadPoolExecutor(max_workers=2) as pool:
            opt_future = pool.submit(stages.run, "optimize", optimize, tree, cfg.circuit, cfg.opt)
            adj_future = pool.submit(_adjust_track, stages, net, tree, cfg)
            r, trace = opt_future.result()
            initial, adjusted, report = adj_future.result()

        write_json(out / "assignment.json", assignment_json(net, tree, r, cfg.circuit, trace))
        emit("assignment", out / "assignment.json")
        initial.save(out / "layout_initial.json")
        emit("layout_initial", out / "layout_initial.json")
        save_report(report, out / "adjust_report.json")
        emit("adjust_report", out / "adjust_report.json")
        stages.run("adjust-check", _check_goal, report)

        factor = stages.run("fit", required_scale, adjusted, tree, r, cfg.material)
        final = scale_layout(adjusted, factor) if factor > 1 else adjusted
        final.save(out / "layout.json")
        emit("layout", out / "layout.json")

        model = stages.run("fabricate", build_fabrication_model, final, net.edge_list(), tree, r,
                           cfg.material)
        paths = stages.run("export", export_meshes, model, out)
        for key, p in paths.items():
            emit(key, p)

        profile = delay_profile(tree, r, cfg.circuit)
        table = stages.run("calibrate", calibration_table, profile, cfg.clock_period,
                           [net.original_ids.get(i, i) for i in range(net.n_nodes)])
        table.save(out / "calibration.json")
        emit("calibration", out / "calibration.json")
    except StageError as exc:
        marker.write_text(f"stage: {exc.stage}\nerror: {exc.cause}\n")
        write_json(out / "timings.json", stages.timings)
        raise

    manifest = {
        "versions": _versions(),
        "input": {"path": Path(net_path).name, "sha256": _sha256(net_path)},
        "config": json.loads(config_json(cfg)),
        "seeds": {"rng_seed": cfg.rng_seed, "opt": cfg.opt.rng_seed,
                  "layout": cfg.layout.rng_seed, "train": cfg.train.seed},
        "summary": {
            "n_nodes": net.n_nodes,
            "n_links": net.n_links,
            "branch_metric": branch_metric(tree),
            "layout_scale_factor": factor,
            "primary_goal_met": report.primary_goal_met,
            "min_margin": table.min_margin,
            "min_margin_cycles": table.min_margin_cycles,
            "ambiguous": table.ambiguous,
            "fabrication": model.summary(),
        },
        "artifacts": {k: {"file": v, "sha256": _sha256(out / v)} for k, v in sorted(artifacts.items())},
        "timings_file": "timings.json",
    }
    write_json(out / "manifest.json", manifest)
    write_json(out / "timings.json", stages.timings)
    marker.unlink()
    return manifest


# ---------------------------------------------------------------------------
# scalability harness
# ---------------------------------------------------------------------------

EVAL_FIELDS = ["network", "N", "L", "B", "t_select", "t_optimize", "t_layout", "t_adjust",
               "iterations", "status", "error"]
NETWORK_SUFFIXES = (".json", ".csv", ".txt")


def _time(fn, *args):
    t0 = time.perf_counter()
    result = fn(*args)
    return result, time.perf_counter() - t0


def eval_network(path, cfg: PipelineConfig, stages=("optimize", "adjust")) -> dict:
    row = {k: "" for k in EVAL_FIELDS}
    row["network"] = Path(path).name
    try:
        net = load_network(path)
        row.update(N=net.n_nodes, L=net.n_links)
        tree, row["t_select"] = _time(select_resistor_links, net)
        row["B"] = branch_metric(tree)
        if "optimize" in stages:
            (_, trace), row["t_optimize"] = _time(optimize, tree, cfg.circuit, cfg.opt)
            row["iterations"] = len(trace.min_diff)
        if "adjust" in stages:
            layout, row["t_layout"] = _time(make_layout, net, cfg.layout)
            _, row["t_adjust"] = _time(adjust_layout, layout, net.edge_list(), tree.edges,
                                       cfg.loss_weights, cfg.train)
        row["status"] = "ok"
    except Exception as exc:  # noqa: BLE001 -- failures are recorded per network
        row["status"] = "error"
        row["error"] = f"{type(exc).__name__}: {exc}"
        traceback.clear_frames(exc.__traceback__)
    return row


def eval_scalability(dataset_dir, out_csv, cfg: PipelineConfig = PipelineConfig(),
                     stages=("optimize", "adjust")) -> list[dict]:
    """Time each stage for every network file in ``dataset_dir``; one CSV row per network."""
    files = sorted(p for p in Path(dataset_dir).iterdir() if p.suffix in NETWORK_SUFFIXES)
    rows = [eval_network(p, cfg, stages) for p in files]
    with open(out_csv, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=EVAL_FIELDS)
        writer.writeheader()
        writer.writerows(rows)
    return rows
