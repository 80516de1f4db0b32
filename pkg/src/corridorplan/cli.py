"""Command line interface: ``python -m corridorplan <verb> [options]``.

Verbs:
    forest  generate a forest and dump its points, tree centers and spec
    plan    one offline plan from start to goal on a dumped world
    fly     one closed-loop trial
    sweep   success-rate and runtime grid over densities and speeds
    export  plot-data bundle for one trial (and optionally a small sweep)

Every verb reads one JSON config (``--config``) plus ``--set key=value``
overrides and writes into a fresh run directory under ``--out`` that holds a
``manifest.json`` with the fully resolved config.  The exit code is 0 when the
command ran, whatever the flight outcomes; 2 signals a configuration or I/O
error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import bench
from .config import ConfigError, build_spec, build_sweep, load_config, write_config
from .errors import PlannerError
from .world import WorldModel, forest_bounds, generate_forest, read_points_csv, write_points_csv

EXIT_OK, EXIT_CONFIG = 0, 2


def _run_dir(root, verb: str) -> Path:
    base = Path(root) / f"{verb}-{time.strftime('%Y%m%d-%H%M%S')}"
    out, k = base, 1
    while out.exists():
        out = Path(f"{base}-{k}")
        k += 1
    out.mkdir(parents=True)
    return out


def _manifest(out: Path, doc: dict, seeds, **extra):
    bench.write_manifest(out, doc, seeds, extra)
    write_config(doc, out / "config.json")


def cmd_forest(args, doc):
    spec = build_spec(doc)
    forest, _ = spec.resolved()
    truth, centers = generate_forest(forest, spec.voxel_resolution, spec.sampler.drone_radius)
    out = _run_dir(args.out, "forest")
    write_points_csv(out / "points.csv", truth.points)
    np.savetxt(out / "trees.csv", centers, delimiter=",", header="x,y", comments="")
    forest.to_json(out / "forest.json")
    _manifest(out, doc, [spec.seed], verb="forest", trees=len(centers), points=len(truth.points))
    print(f"{len(centers)} trees, {len(truth.points)} points -> {out}")
    return EXIT_OK


def _load_world(args, spec):
    forest, _ = spec.resolved()
    if args.world is None:
        truth, _ = generate_forest(forest, spec.voxel_resolution, spec.sampler.drone_radius)
        return truth
    src = Path(args.world)
    if (src / "forest.json").exists():
        forest = type(forest).from_json(src / "forest.json")
    points = read_points_csv(src / "points.csv" if src.is_dir() else src)
    inflation = spec.guide_inflation
    if inflation is None:
        inflation = spec.sampler.drone_radius + spec.sampler.min_radius
    return WorldModel(forest_bounds(forest), spec.voxel_resolution, inflation, points, solid_bounds=True)


def cmd_plan(args, doc):
    spec = build_spec(doc)
    _, ocfg = spec.resolved()
    world = _load_world(args, spec)
    out = _run_dir(args.out, "plan")
    _manifest(out, doc, [spec.seed], verb="plan", world=args.world)
    try:
        plan = bench.plan_offline(world, spec.start, spec.goal, spec.sampler, ocfg,
                                  np.random.default_rng(spec.seed))
    except PlannerError as exc:
        (out / "report.json").write_text(json.dumps({"success": False, "error": str(exc)}, indent=2))
        print(f"planning failed: {exc}")
        return EXIT_OK
    traj = plan.result.trajectory
    traj.to_json(out / "trajectory.json")
    traj.dump_csv(out / "trajectory.csv")
    plan.corridor.to_json(out / "corridor.json")
    plan.path.dump_csv(out / "guide_path.csv")
    report = {
        "success": True,
        "duration": traj.total_duration,
        "pieces": traj.num_pieces,
        "spheres": len(plan.corridor),
        "iterations": plan.result.iterations,
        "message": plan.result.message,
        "max_speed": plan.report.max_speed,
        "max_accel": plan.report.max_accel,
        "max_corridor_violation": plan.report.max_corridor_violation,
        "clearance": plan.clearance,
        "timings_ms": plan.timings_ms,
    }
    (out / "report.json").write_text(json.dumps(report, indent=2))
    print(f"T {traj.total_duration:.2f}s, {len(plan.corridor)} spheres, vmax {plan.report.max_speed:.2f}, "
          f"amax {plan.report.max_accel:.2f}, clearance {plan.clearance:.3f} -> {out}")
    return EXIT_OK


def _write_trial(out: Path, result, spec):
    bench.write_results_csv(out / "results.csv", [result])
    bench.write_events(out / "events.jsonl", result.artifacts["events"])
    session = result.artifacts["session"]
    ts, d = session.sample(0.0, result.flight_time, 0.01, orders=3)
    bench._write_csv(out / "trajectory.csv", ["t", "x", "y", "z", "vx", "vy", "vz", "ax", "ay", "az"],
                     np.column_stack([ts, d[0], d[1], d[2]]))
    check = bench.offline_check(result, spec)
    (out / "offline_check.json").write_text(json.dumps(
        {**check, "passes": bench.offline_passes(check, spec)}, indent=2))


def cmd_fly(args, doc):
    spec = build_spec(doc)
    out = _run_dir(args.out, "fly")
    _manifest(out, doc, [spec.seed], verb="fly")
    result = bench.run_trial(spec)
    _write_trial(out, result, spec)
    print(bench.summarize([result]))
    print(f"-> {out}")
    return EXIT_OK


def cmd_sweep(args, doc):
    spec = build_spec(doc)
    sweep_cfg = build_sweep(doc)
    out = _run_dir(args.out, "sweep")
    progress = (lambda r: print(bench.summarize([r]), flush=True)) if not args.quiet else None
    sweep = bench.run_sweep(sweep_cfg.densities, sweep_cfg.speeds, sweep_cfg.trials_per_cell, spec,
                            workers=sweep_cfg.workers, progress=progress)
    bench.write_sweep(sweep, spec, out, sweep_cfg.trials_per_cell)
    write_config(doc, out / "config.json")
    rates = sweep.success_matrix()
    print("success rate (rows: density, cols: v_max " + ", ".join(f"{v:g}" for v in sweep.speeds) + ")")
    for dens, row in zip(sweep.densities, rates):
        print(f"  1/{1 / dens:.0f}: " + "  ".join(f"{x:.2f}" for x in row))
    rt = sweep.runtime_table()
    print(f"mapping {rt['mapping_mean']:.2f} +- {rt['mapping_std']:.2f} ms, "
          f"planning {rt['planning_mean']:.2f} +- {rt['planning_std']:.2f} ms -> {out}")
    return EXIT_OK


def cmd_export(args, doc):
    spec = build_spec(doc)
    out = _run_dir(args.out, "export")
    _manifest(out, doc, [spec.seed], verb="export")
    result = bench.run_trial(spec)
    _write_trial(out, result, spec)
    sweep = None
    if args.with_sweep:
        sweep_cfg = build_sweep(doc)
        sweep = bench.run_sweep(sweep_cfg.densities, sweep_cfg.speeds, sweep_cfg.trials_per_cell, spec,
                                workers=sweep_cfg.workers)
    files = bench.export_plots(result, out, sweep)
    print(bench.summarize([result]))
    for f in files:
        print(f"  {f}")
    return EXIT_OK


COMMANDS = {"forest": cmd_forest, "plan": cmd_plan, "fly": cmd_fly, "sweep": cmd_sweep, "export": cmd_export}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="corridorplan", description="Sphere-corridor quadrotor planning toolkit")
    sub = parser.add_subparsers(dest="verb", required=True)
    helps = {
        "forest": "generate a forest and dump it",
        "plan": "single offline plan on a dumped (or generated) world",
        "fly": "one closed-loop trial",
        "sweep": "benchmark grid over densities and speeds",
        "export": "plot-data bundle for one trial",
    }
    for verb, text in helps.items():
        p = sub.add_parser(verb, help=text)
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config value, e.g. optimizer.rho_col=1e7 (repeatable)")
        p.add_argument("--out", default="runs", help="parent directory for the run directory")
        p.add_argument("--seed", type=int, help="shortcut for --set trial.seed=N")
        if verb == "plan":
            p.add_argument("--world", help="directory written by 'forest' (or a points CSV)")
        if verb == "sweep":
            p.add_argument("--quiet", action="store_true", help="no per-trial progress lines")
        if verb == "export":
            p.add_argument("--with-sweep", action="store_true", help="also run the configured sweep")
    sub.add_parser("config", help="print the default configuration")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.verb == "config":
        print(json.dumps(load_config(), indent=2))
        return EXIT_OK
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"trial.seed={args.seed}")
    try:
        doc = load_config(args.config, overrides)
        return COMMANDS[args.verb](args, doc)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


