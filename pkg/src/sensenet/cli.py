"""``sensenet`` command line.

Exit codes: 0 success, 1 validation error, 2 optimization/adjustment goal failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .adjust import adjust_layout, save_report
from .circuit import CircuitSpec, delay_profile
from .config import ConfigError, known_keys, load_config, parse_config_text, parse_seconds
from .fabrication import (CalibrationTable, FabricationError, MaterialProfile,
                          build_fabrication_model, calibration_table, required_scale,
                          scale_layout)
from .layout import Layout3D, make_layout
from .mesh import export_meshes
from .network import load_network, validate_connected
from .optimize import optimize
from .pipeline import (EXIT_CODES, GOAL, IO, VALIDATION, GoalNotMet, StageError,
                       assignment_json, eval_scalability, load_assignment,
                       run_pipeline, write_json)
from .runtime import (ClassifierConfig, classify_touch, log_session, read_touch_script,
                      simulate_session)
from .selection import select_resistor_links


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    group = p.add_argument_group("config overrides (one flag per config key)")
    for key in known_keys():
        group.add_argument(f"--{key}", dest=f"cfg:{key}", metavar="VALUE")


def _config(args):
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg:") and v is not None}
    return load_config(args.config, overrides)


def _net(args):
    return load_network(args.net, args.format)


def _add_net(p: argparse.ArgumentParser) -> None:
    p.add_argument("--net", required=True, help="network file (.json or edge .csv)")
    p.add_argument("--format", choices=["json", "csv"], help="override format inference")


def cmd_load_check(args) -> int:
    net = _net(args)
    print(json.dumps({"nodes": net.n_nodes, "links": net.n_links,
                      "connected": validate_connected(net)}))
    return 0


def cmd_select(args) -> int:
    net = _net(args)
    tree = select_resistor_links(net)
    write_json(args.out, assignment_json(net, tree))
    return 0


def cmd_optimize(args) -> int:
    cfg = _config(args)
    net = _net(args)
    tree = select_resistor_links(net)
    r, trace = optimize(tree, cfg.circuit, cfg.opt)
    write_json(args.out, assignment_json(net, tree, r, cfg.circuit, trace))
    print(json.dumps(trace.summary()))
    return 0


def cmd_layout(args) -> int:
    cfg = _config(args)
    make_layout(_net(args), cfg.layout).save(args.out)
    return 0


def cmd_adjust(args) -> int:
    cfg = _config(args)
    net = _net(args)
    tree, _, _ = load_assignment(args.assignment)
    layout = Layout3D.load(args.layout)
    adjusted, report = adjust_layout(layout, net.edge_list(), tree.edges, cfg.loss_weights, cfg.train)
    adjusted.save(args.out)
    save_report(report, args.report)
    if not report.primary_goal_met:
        raise GoalNotMet("conductive intersections remain after adjustment")
    return 0


def _material(path) -> MaterialProfile:
    if not path:
        return MaterialProfile()
    values = parse_config_text(Path(path).read_text())
    values = {(k if k.startswith("material.") else f"material.{k}"): v for k, v in values.items()}
    return load_config(None, values).material


def cmd_fabricate(args) -> int:
    tree, r, data = load_assignment(args.assignment)
    if r is None:
        raise ConfigError("assignment has no resistances; run optimize first")
    mat = _material(args.material)
    layout = Layout3D.load(args.layout)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if not args.no_fit:
        factor = required_scale(layout, tree, r, mat)
        if factor > 1:
            layout = scale_layout(layout, factor)
            layout.save(out / "layout_fabricated.json")
    edges = [tuple(e) for e in data.get("links", tree.edges)]
    model = build_fabrication_model(layout, edges, tree, r, mat)
    export_meshes(model, out)
    print(json.dumps(model.summary()))
    return 0


def cmd_calibrate(args) -> int:
    tree, r, data = load_assignment(args.assignment)
    if r is None:
        raise ConfigError("assignment has no resistances; run optimize first")
    if args.config or any(k.startswith("cfg:") and v is not None for k, v in vars(args).items()):
        spec = _config(args).circuit
    elif "circuit" in data:
        spec = CircuitSpec(**data["circuit"])
    else:
        spec = CircuitSpec()
    table = calibration_table(delay_profile(tree, r, spec), parse_seconds(args.clock),
                              data.get("node_ids"))
    table.save(args.out)
    if table.ambiguous:
        print("warning: two nodes share a cycle count under this clock", file=sys.stderr)
    return 0


def _classifier(args, table: CalibrationTable) -> ClassifierConfig:
    clock = parse_seconds(args.clock) if args.clock else table.clock_period
    none = parse_seconds(args.none_threshold) if args.none_threshold else None
    sigma = parse_seconds(args.noise_sigma) if getattr(args, "noise_sigma", None) else 0.0
    return ClassifierConfig(clock, sigma, none)


def cmd_classify(args) -> int:
    table = CalibrationTable.load(args.calib)
    cfg = _classifier(args, table)
    got = classify_touch(parse_seconds(args.delay), table, cfg)
    print("none" if got is None else table.label(got))
    return 0


def cmd_simulate(args) -> int:
    table = CalibrationTable.load(args.calib)
    cfg = _classifier(args, table)
    events = simulate_session(read_touch_script(args.script), table, cfg,
                              np.random.default_rng(args.seed))
    summary = log_session(events, args.out, args.summary)
    print(json.dumps({"events": summary["events"], "order": summary["order"]}))
    return 0


def cmd_pipeline(args) -> int:
    manifest = run_pipeline(args.net, _config(args), args.out, args.format)
    print(json.dumps(manifest["summary"], sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    stages = tuple(s for s in args.stages.split(",") if s)
    rows = eval_scalability(args.dataset, args.out, _config(args), stages)
    failed = sum(r["status"] != "ok" for r in rows)
    print(json.dumps({"networks": len(rows), "failed": failed}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sensenet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("load-check", help="validate a network file")
    _add_net(p)
    p.set_defaults(func=cmd_load_check)

    p = sub.add_parser("select", help="choose resistor links; writes an assignment stub")
    _add_net(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("optimize", help="select and optimize resistances")
    _add_net(p)
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("layout", help="initial 3D layout")
    _add_net(p)
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_layout)

    p = sub.add_parser("adjust", help="remove conductive intersections from a layout")
    _add_net(p)
    _add_config_flags(p)
    p.add_argument("--layout", required=True)
    p.add_argument("--assignment", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", default="adjust_report.json")
    p.set_defaults(func=cmd_adjust)

    p = sub.add_parser("fabricate", help="serpentine traces, solids and STL export")
    p.add_argument("--layout", required=True)
    p.add_argument("--assignment", required=True)
    p.add_argument("--material", help="material config (material.* keys or bare field names)")
    p.add_argument("--no-fit", action="store_true",
                   help="fail instead of enlarging the layout when a resistance does not fit")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_fabricate)

    p = sub.add_parser("calibrate", help="predicted calibration table")
    p.add_argument("--assignment", required=True)
    p.add_argument("--clock", default="21ns")
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    for name, func in (("classify", cmd_classify), ("simulate", cmd_simulate)):
        p = sub.add_parser(name, help="classify one delay" if name == "classify"
                           else "simulate a scripted touch session")
        p.add_argument("--calib", required=True)
        p.add_argument("--clock", help="defaults to the table's clock period")
        p.add_argument("--none-threshold")
        if name == "classify":
            p.add_argument("--delay", required=True, help="e.g. 7.0us")
        else:
            p.add_argument("--script", required=True, help="CSV rows: timestamp,node,duration")
            p.add_argument("--noise-sigma", default="0")
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--out", required=True, help="session CSV (appended)")
            p.add_argument("--summary", help="summary JSON path")
        p.set_defaults(func=func)

    p = sub.add_parser("pipeline", help="run every stage")
    _add_net(p)
    _add_config_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("eval", help="scalability timings over a directory of networks")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="CSV report")
    p.add_argument("--stages", default="optimize,adjust")
    _add_config_flags(p)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (GoalNotMet, FabricationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODES[GOAL]
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODES[IO]
    except (ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODES[VALIDATION]


if __name__ == "__main__":
    sys.exit(main())
