"""Command-line front end.

Commands: ``plan`` (choreography file -> collision-free show plan),
``compensate`` (apply a frequency-response table to a plan), ``simulate``
(track a plan with the vehicle model), ``sweep`` (randomized feasibility
statistics) and ``bode`` (identify the simulated plant's response).  Report
paths write figures (PNG) next to the delimited data they render.

Exit codes: 0 success, 2 schema/input error, 3 infeasible plan, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import plots
from .choreography import (
    SchemaError,
    compensate_document,
    dump_document,
    load_choreography,
    load_plan_document,
    plan_choreography,
    schedule_from_document,
    write_drone_files,
    write_plan_artifacts,
)
from .collision import CollisionEllipsoid
from .sim import AxisPlant, VehicleModel, run_choreography, synthetic_bode
from .sweep import SweepConfig, run_sweep
from .sync import EstimationError, FrequencyResponseTable
from .trajopt import NumericalError

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERICAL = 4


class _DirLock:
    """Guards an output directory against concurrent writers."""

    def __init__(self, directory: Path):
        self.path = Path(directory) / ".lock"

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise RuntimeError(
                f"output directory is locked by another run ({self.path}); "
                "remove the lock file if that run is dead"
            )
        os.close(fd)
        return self

    def __exit__(self, *exc):
        try:
            self.path.unlink()
        except FileNotFoundError:
            pass


def _load_model(path: str | None) -> VehicleModel:
    if path is None:
        return VehicleModel.default()
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise SchemaError(path, f"cannot read model config: {exc}")
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}:{exc.lineno}", exc.msg)

    def per_axis(key, default):
        val = doc.get(key, default)
        if isinstance(val, (int, float)):
            return [float(val)] * 3
        if isinstance(val, list) and len(val) == 3:
            return [float(v) for v in val]
        raise SchemaError(f"{path}:$.{key}", "expected a number or list of 3 numbers")

    wn = per_axis("natural_freq", 7.0)
    zeta = per_axis("damping", 0.7)
    delay = per_axis("delay", 0.1)
    h = doc.get("sample_period", 0.01)
    try:
        return VehicleModel(
            axes=tuple(AxisPlant(wn[i], zeta[i], delay[i]) for i in range(3)),
            sample_period=float(h),
        )
    except ValueError as exc:
        raise SchemaError(f"{path}:$", str(exc))


def _write_timeseries_csv(path, run) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "drone", "ref_x", "ref_y", "ref_z", "resp_x", "resp_y", "resp_z"])
        for d in range(run.n_drones):
            ref, resp = run.reference[d], run.response[d]
            for k, t in enumerate(run.times):
                writer.writerow([repr(float(t)), d,
                                 *(repr(float(v)) for v in ref[k]),
                                 *(repr(float(v)) for v in resp[k])])


def _cmd_plan(args) -> int:
    choreo = load_choreography(args.input)
    if args.degree or args.k0 or args.max_iters:
        segments = []
        for kind, seg in choreo.segments:
            if kind == "transition":
                if args.degree:
                    seg = replace(seg, degree=args.degree)
                if args.k0:
                    seg = replace(seg, k0=args.k0)
                if args.max_iters:
                    seg = replace(seg, max_iters=args.max_iters)
            segments.append((kind, seg))
        choreo = replace(choreo, segments=tuple(segments))
    out = Path(args.out)
    with _DirLock(out):
        result = plan_choreography(choreo, seed=args.seed)
        write_plan_artifacts(result, out)
        if not args.no_figures:
            idx = 0
            for entry in result.segments:
                if entry[0] != "transition":
                    continue
                idx += 1
                planned = entry[1]
                if planned.plan.trajectories:
                    plots.transition_paths(planned.plan,
                                           out / "figures" / f"transition_{idx:02d}_paths")
                    plots.separation_profile(planned.plan, choreo.ellipsoid,
                                             out / "figures" / f"transition_{idx:02d}_separation")
    n_transitions = sum(1 for entry in result.segments if entry[0] == "transition")
    print(f"planned {n_transitions} transition(s) for {choreo.n_drones} drones "
          f"-> {'feasible' if result.feasible else 'INFEASIBLE'}")
    print(f"artifacts: {out / 'plan.json'}, {out / 'resolution.log'}, {out / 'report.json'}")
    return EXIT_OK if result.feasible else EXIT_INFEASIBLE


def _cmd_compensate(args) -> int:
    doc = load_plan_document(args.input)
    table = _read_table(args.table)
    out = Path(args.out)
    with _DirLock(out):
        new_doc, warnings = compensate_document(doc, table)
        out.mkdir(parents=True, exist_ok=True)
        (out / "plan.json").write_text(dump_document(new_doc))
        write_drone_files(new_doc, out)
        report = {
            "table": str(args.table),
            "extrapolated_modes": warnings["extrapolated_modes"],
            "primitive_segments": sum(1 for s in new_doc["segments"] if s["type"] == "primitive"),
        }
        (out / "compensation_report.json").write_text(dump_document(report))
        if not args.no_figures:
            plots.bode(table, out / "figures" / "table_bode")
    if warnings["extrapolated_modes"]:
        print(f"warning: {warnings['extrapolated_modes']} mode-axis lookups were "
              "outside the table range (clamped)")
    print(f"compensated plan written to {out / 'plan.json'}")
    return EXIT_OK


def _read_table(path) -> FrequencyResponseTable:
    try:
        return FrequencyResponseTable.read_csv(path)
    except OSError as exc:
        raise SchemaError(str(path), f"cannot read table: {exc}")
    except ValueError as exc:
        raise SchemaError(str(path), str(exc))


def _cmd_simulate(args) -> int:
    doc = load_plan_document(args.input)
    model = _load_model(args.model)
    try:
        schedule = schedule_from_document(doc)
    except (ValueError, KeyError, TypeError) as exc:
        raise SchemaError(str(args.input), f"bad plan artifact: {exc}")
    ellipsoid = CollisionEllipsoid.from_radii(*doc["ellipsoid_radii"])
    out = Path(args.out)
    with _DirLock(out):
        run = run_choreography(schedule, model, ellipsoid)
        out.mkdir(parents=True, exist_ok=True)
        _write_timeseries_csv(out / "timeseries.csv", run)
        (out / "metrics.json").write_text(dump_document(run.metrics_dict()))
        if not args.no_figures:
            plots.tracking_errors(run, out / "figures" / "tracking_error")
    m = run.metrics_dict()
    print(f"simulated {run.n_drones} drone(s) over {run.times[-1] - run.times[0]:.1f}s "
          f"at {1.0 / model.sample_period:.0f} Hz")
    print(f"fleet RMS error: {m['fleet_rms_error_m']:.4f} m; "
          f"worst drone max error: {max(m['max_error_m']):.4f} m")
    if np.isfinite(run.min_separation):
        print(f"min scaled separation^2 (response): {run.min_separation:.3f}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    volume = _parse_volume(args.volume)
    radii = tuple(float(v) for v in args.ellipsoid.split(","))
    if len(radii) != 3:
        raise SchemaError("--ellipsoid", "expected rx,ry,rz")
    cfg = SweepConfig(
        n_drones=args.n_drones,
        volume_min=(0.0, 0.0, 0.0),
        volume_max=volume,
        ellipsoid_radii=radii,
        trials=args.trials,
        seed=args.seed,
        duration=args.duration,
        degree=args.degree or 14,
        k0=args.k0 or 10,
        max_iters=args.max_iters or 10,
    )
    out = Path(args.out)
    with _DirLock(out):
        def progress(rec):
            status = "ok " if rec.feasible else "FAIL"
            print(f"trial {rec.trial:3d}: {status} edges={rec.initial_edges:2d} "
                  f"sweeps={rec.sweeps} K={rec.k_final} [{rec.elapsed_s:.1f}s]",
                  flush=True)

        result = run_sweep(cfg, progress=progress if args.verbose else None)
        out.mkdir(parents=True, exist_ok=True)
        sweep_doc = {
            "config": {
                "n_drones": cfg.n_drones,
                "volume_max": list(cfg.volume_max),
                "ellipsoid_radii": list(cfg.ellipsoid_radii),
                "trials": cfg.trials,
                "seed": cfg.seed,
                "duration": cfg.duration,
                "degree": cfg.degree,
                "k0": cfg.k0,
                "max_iters": cfg.max_iters,
            },
            "feasible_fraction": result.feasible_fraction,
            "trials": [
                {
                    "trial": r.trial,
                    "feasible": bool(r.feasible),
                    "initial_edges": r.initial_edges,
                    "sweeps": r.sweeps,
                    "k_final": r.k_final,
                    "min_step_separation": float(r.min_step_separation),
                    "min_fine_separation": float(r.min_fine_separation),
                    "assignment_cost": float(r.assignment_cost),
                    "detail": r.detail,
                }
                for r in result.records
            ],
        }
        (out / "sweep.json").write_text(dump_document(sweep_doc))
        if not args.no_figures:
            plots.sweep_outcomes(result.records, out / "figures" / "sweep_outcomes")
    timing = result.timing_percentiles()
    print(f"feasible: {result.feasible_fraction:.2%} of {cfg.trials} trials")
    print(f"timing: p50 {timing['p50_s']:.2f}s  p90 {timing['p90_s']:.2f}s  "
          f"max {timing['max_s']:.2f}s")
    return EXIT_OK


def _parse_volume(text: str):
    try:
        dims = tuple(float(v) for v in text.lower().split("x"))
    except ValueError:
        dims = ()
    if len(dims) != 3 or any(d <= 0 for d in dims):
        raise SchemaError("--volume", "expected WxDxH, e.g. 5x5x2")
    return dims


def _cmd_bode(args) -> int:
    model = _load_model(args.model)
    freqs = np.array([float(v) for v in args.freqs.split(",")])
    out = Path(args.out)
    with _DirLock(out):
        table = synthetic_bode(model, freqs, amplitude=args.amplitude)
        out.mkdir(parents=True, exist_ok=True)
        table.write_csv(out / "table.csv")
        if not args.no_figures:
            plots.bode(table, out / "figures" / "bode",
                       analytic=lambda w: model.frequency_response(w, 0))
    print(f"response table with {len(freqs)} frequencies per axis -> {out / 'table.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swarmshow",
        description="Plan, compensate and simulate periodic drone-show choreographies.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, seed=False):
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--no-figures", action="store_true", help="skip PNG figure rendering")
        if seed:
            p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("plan", help="plan a choreography file into show trajectories")
    p.add_argument("--input", required=True, help="choreography JSON file")
    common(p, seed=True)
    p.add_argument("--degree", type=int, default=None, help="override polynomial degree")
    p.add_argument("--k0", type=int, default=None, help="override initial constraint steps")
    p.add_argument("--max-iters", type=int, default=None, help="override resolution sweeps")
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("compensate", help="apply a frequency-response table to a plan")
    p.add_argument("--input", required=True, help="plan.json artifact")
    p.add_argument("--table", required=True, help="response table CSV")
    common(p)
    p.set_defaults(func=_cmd_compensate)

    p = sub.add_parser("simulate", help="simulate a plan on the vehicle model")
    p.add_argument("--input", required=True, help="plan.json artifact")
    p.add_argument("--model", default=None, help="vehicle model JSON config")
    common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("sweep", help="feasibility statistics over random primitive pairs")
    common(p, seed=True)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--n-drones", type=int, default=25)
    p.add_argument("--volume", default="5x5x2", help="flight volume WxDxH in meters")
    p.add_argument("--ellipsoid", default="0.14,0.14,0.35", help="collision radii rx,ry,rz")
    p.add_argument("--duration", type=float, default=3.0, help="transition duration [s]")
    p.add_argument("--degree", type=int, default=None)
    p.add_argument("--k0", type=int, default=None)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--verbose", action="store_true", help="print per-trial progress")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("bode", help="identify the simulated plant's frequency response")
    p.add_argument("--model", default=None, help="vehicle model JSON config")
    common(p)
    p.add_argument("--freqs", default="0.5,0.75,1.0,1.5,2.0,3.0,4.0,5.0,6.0",
                   help="comma-separated frequencies [rad/s]")
    p.add_argument("--amplitude", type=float, default=0.5)
    p.set_defaults(func=_cmd_bode)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except ValueError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (EstimationError, NumericalError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
