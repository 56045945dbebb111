"""Command-line entry point.

Exit codes: 0 success, 1 invalid input (bad scenario, flags or files),
2 solver failure / check not met.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from dmcc.errors import DmccError, SolverFailure, ValidationError

EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 1, 2
FIGURES = ("fig5", "fig6", "fig7", "fig8")


def _err(msg: str):
    print(f"error: {msg}", file=sys.stderr)


def _validation(exc: ValidationError) -> int:
    for path, msg in exc.errors.items():
        _err(f"{path}: {msg}")
    return EXIT_INVALID


def _scenario(args):
    from dmcc import io

    if args.scenario is None and args.preset is None:
        raise ValidationError({"scenario": "give a scenario file or --preset"})
    return io.load_scenario(args.scenario, preset_name=args.preset if args.scenario is None else None,
                            overrides=args.set)


def cmd_plan(args) -> int:
    from dmcc import io
    from dmcc.planner import plan_handover

    t0 = time.perf_counter()
    scen = _scenario(args)
    kind, spec, params, opts, _ = io.build(scen)
    if kind != "handover":
        raise ValidationError({"kind": "plan expects a handover scenario; use 'race' for races"})
    result = plan_handover(spec, params, opts, raise_on_failure=False)
    out = io.output_dir(args.out)
    files = io.write_plan(result, out, args.stem, scenario=scen)
    io.RunManifest("plan", io.config_hash(scen), scen, result.report.to_dict(), files,
                   time.perf_counter() - t0).write(out, f"{args.stem}.manifest.json")
    print(f"{result.report.status.value}: t_N = {result.t_N:.6f} s, "
          f"{len(result.contact_knots())} contact knots -> {files[0]}")
    return EXIT_OK if result.report.ok else EXIT_SOLVER


def cmd_simulate(args) -> int:
    from dmcc import io
    from dmcc.planner import replay_deviation

    t0 = time.perf_counter()
    result = io.plan_from_files(args.plan, args.meta)
    try:
        dev = replay_deviation(result)
    except DmccError as exc:
        _err(f"replay failed: {exc}")
        return EXIT_SOLVER
    ok = dev < args.tol
    print(f"max knot deviation {dev:.3e} ({'ok' if ok else 'exceeds'} tolerance {args.tol:g})")
    if args.out or io.OUTPUT_ENV in __import__("os").environ:
        out = io.output_dir(args.out)
        rep = {"max_deviation": dev, "tolerance": args.tol, "plan": str(args.plan)}
        io.write_json(out / "simulate.json", rep)
        io.RunManifest("simulate", io.config_hash(rep), rep, None, [out / "simulate.json"],
                       time.perf_counter() - t0).write(out, "simulate.manifest.json")
    return EXIT_OK if ok else EXIT_SOLVER


def _race_spec(args, n: int | None, mode: str):
    from dmcc import io
    from dmcc.racing import RaceSpec

    if args.scenario is not None:
        scen = io.load_scenario(args.scenario, overrides=args.set)
    else:
        scen = io.load_scenario(preset_name=f"race-{n if n is not None else 1}", overrides=args.set)
    kind, spec, params, opts, _ = io.build(scen)
    if kind != "race":
        raise ValidationError({"kind": "race expects a race scenario"})
    spec = RaceSpec.from_dict({**spec.to_dict(), "mode": mode})
    return scen, spec, params, opts


def cmd_race(args) -> int:
    from dmcc import io
    from dmcc.racing import MODES, plan_race, sweep

    modes = args.mode.split(",")
    for m in modes:
        if m not in MODES:
            raise ValidationError({"--mode": f"must be one of {MODES}"})
    t0 = time.perf_counter()
    out = io.output_dir(args.out)
    if args.sweep:
        lo, _, hi = args.sweep.partition("-")
        try:
            counts = list(range(int(lo), int(hi or lo) + 1))
        except ValueError:
            raise ValidationError({"--sweep": "expected a range like 1-4"}) from None
        _, _, params, opts = _race_spec(args, counts[0], modes[0])
        rows = sweep(counts, modes, params, opts)
        path = out / "race_sweep.csv"
        io.write_csv(path, io.SWEEP_COLUMNS, [[r["n_waypoints"], r["mode"], r["t_N"], r["wall_time"],
                                               r["optimal"]] for r in rows])
        for r in rows:
            print(f"n={r['n_waypoints']} {r['mode']:>3}: t_N={r['t_N']:.4f} s "
                  f"({r['wall_time']:.1f} s, {r['status']})")
        io.RunManifest("race --sweep", io.config_hash({"counts": counts, "modes": modes}),
                       {"counts": counts, "modes": modes}, None, [path],
                       time.perf_counter() - t0).write(out, "race_sweep.manifest.json")
        return EXIT_OK if all(r["optimal"] for r in rows) else EXIT_SOLVER
    scen, spec, params, opts = _race_spec(args, args.waypoints, modes[0])
    result = plan_race(spec, params, opts, raise_on_failure=False)
    path = out / f"race_{spec.mode}.csv"
    io.write_csv(path, io.race_columns(spec.n_waypoints), io.race_rows(result))
    io.RunManifest("race", io.config_hash(scen), scen, result.report.to_dict(), [path],
                   time.perf_counter() - t0).write(out, f"race_{spec.mode}.manifest.json")
    print(f"{result.report.status.value}: t_N = {result.t_N:.6f} s ({spec.mode}) -> {path}")
    return EXIT_OK if result.report.ok else EXIT_SOLVER


def _disturbance(text: str):
    from dmcc.tracking import Disturbance

    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise ValidationError({"--disturbance": "expected 'az' or 'ax,ay,az' in m/s^2 (body frame)"}) from None
    if len(vals) == 1:
        vals = [0.0, 0.0, vals[0]]
    if len(vals) != 3:
        raise ValidationError({"--disturbance": "expected 1 or 3 numbers"})
    return Disturbance(body=tuple(vals))


def cmd_track(args) -> int:
    from dmcc import io
    from dmcc.tracking import NmpcConfig, hover_reference, run_closed_loop

    t0 = time.perf_counter()
    if args.plan is None and not args.hover:
        raise ValidationError({"plan": "give a plan CSV or --hover"})
    if args.hover:
        ref, scen = hover_reference(), {"reference": "hover"}
        nmpc = NmpcConfig()
    else:
        plan = io.plan_from_files(args.plan, args.meta)
        scen = json.loads(Path(args.meta or Path(args.plan).with_suffix(".json")).read_text())["scenario"]
        tracking = io.build(scen)[4]
        try:
            nmpc = NmpcConfig.from_dict(tracking["nmpc"])
        except (TypeError, ValueError) as exc:
            raise ValidationError({"tracking.nmpc": str(exc)}) from None
        ref = plan
    dist = _disturbance(args.disturbance)
    use_gpr = args.gpr == "on"
    res = run_closed_loop(ref, dist, nmpc, use_gpr=use_gpr, duration=args.duration)
    out = io.output_dir(args.out)
    files = [out / f"track_gpr_{args.gpr}.csv"]
    io.write_csv(files[0], io.TRACK_COLUMNS, io.tracking_rows(res.log))
    summary = {"mean_error": res.log.mean_error(), "final_error": float(res.log.position_error[-1]),
               "degraded_steps": int(res.log.degraded.sum()), "gpr": use_gpr}
    if res.collection is not None:
        files.append(out / "track_collection.csv")
        io.write_csv(files[1], io.TRACK_COLUMNS, io.tracking_rows(res.collection))
        summary["nominal_mean_error"] = res.collection.mean_error()
    io.write_json(out / f"track_gpr_{args.gpr}.json", summary)
    files.append(out / f"track_gpr_{args.gpr}.json")
    params = {"scenario": scen, "disturbance": list(dist.body), "gpr": use_gpr, "duration": args.duration}
    io.RunManifest("track", io.config_hash(params), params, None, files,
                   time.perf_counter() - t0).write(out, f"track_gpr_{args.gpr}.manifest.json")
    for k, v in summary.items():
        print(f"{k}: {v}")
    return EXIT_SOLVER if summary["degraded_steps"] else EXIT_OK


def cmd_plot_data(args) -> int:
    from dmcc import io, plotdata

    if args.figure not in FIGURES:
        raise ValidationError({"--figure": f"must be one of {FIGURES}"})
    out = io.output_dir(args.out)
    if args.figure == "fig8":
        table = io.read_csv(args.result, io.TRACK_COLUMNS)
        files = plotdata.fig8(table, out)
    else:
        result = io.plan_from_files(args.result, args.meta)
        files = getattr(plotdata, args.figure)(result, out)
    for f in files:
        print(f)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dmcc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_args(sp):
        sp.add_argument("scenario", nargs="?", help="scenario JSON file")
        sp.add_argument("--preset", help="built-in scenario instead of a file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted override, e.g. constraints.kappa_init=6 (JSON values)")

    def out_arg(sp):
        sp.add_argument("--out", help="output directory (default $DMCC_OUTPUT_DIR or ./dmcc_out)")

    sp = sub.add_parser("plan", help="solve a handover scenario")
    scenario_args(sp); out_arg(sp)
    sp.add_argument("--stem", default="plan", help="output file stem")
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("simulate", help="replay a plan's inputs through the variational integrator")
    sp.add_argument("plan", help="plan CSV")
    sp.add_argument("--meta", help="plan metadata JSON (default: next to the CSV)")
    sp.add_argument("--tol", type=float, default=1e-5)
    out_arg(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("race", help="waypoint race, single solve or sweep")
    scenario_args(sp); out_arg(sp)
    sp.add_argument("--mode", default="del", help="del, rk4, or both comma separated (sweep)")
    sp.add_argument("--waypoints", type=int, default=None, help="seeded course with this many waypoints")
    sp.add_argument("--sweep", help="waypoint-count range, e.g. 1-4")
    sp.set_defaults(func=cmd_race)

    sp = sub.add_parser("track", help="closed-loop NMPC tracking of a plan")
    sp.add_argument("plan", nargs="?", help="plan CSV")
    sp.add_argument("--meta")
    sp.add_argument("--hover", action="store_true", help="track a fixed hover point instead of a plan")
    sp.add_argument("--gpr", choices=("on", "off"), default="off")
    sp.add_argument("--disturbance", default="0", help="body-frame acceleration, 'az' or 'ax,ay,az'")
    sp.add_argument("--duration", type=float, default=20.0)
    out_arg(sp)
    sp.set_defaults(func=cmd_track)

    sp = sub.add_parser("plot-data", help="emit tidy CSV series for figures")
    sp.add_argument("result", help="plan CSV (fig5-7) or tracking CSV (fig8)")
    sp.add_argument("--meta")
    sp.add_argument("--figure", required=True)
    out_arg(sp)
    sp.set_defaults(func=cmd_plot_data)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    try:
        return args.func(args)
    except ValidationError as exc:
        return _validation(exc)
    except SolverFailure as exc:
        _err(str(exc))
        return EXIT_SOLVER
    except DmccError as exc:
        _err(str(exc))
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
