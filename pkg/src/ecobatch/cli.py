"""Command-line front end: ``ecobatch build-batch|simulate|benchmark|report``.

Exit codes
----------
0  success
1  configuration error, unreadable input, or nothing to report
2  batch problem: empty batch, schema/hash error, or batch/config mismatch
3  the run completed but logged safety violations
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from .batchfile import HashMismatch, ParamMismatch, SchemaMismatch, load_batch, save_batch
from .config import ConfigError, RunConfig, load_config
from .core import phase_at
from .fuel import fuel_rate
from .offline import EmptyBatch, build_batch
from .sim import ScenarioMismatch, SimResult, compare_to_benchmark, latency_profile, sweep

EXIT_OK, EXIT_CONFIG, EXIT_BATCH, EXIT_VIOLATIONS = 0, 1, 2, 3

TRAJECTORY_COLUMNS = ("vehicle_id", "kind", "tick", "time_s", "x_m", "v_mps", "a_mps2",
                      "fuel_rate", "phase")
RUN_COLUMNS = ("mpr", "seed", "mode", "prediction_error", "savings", "tempc_fuel",
               "benchmark_fuel", "n_common", "n_nonfinite", "mean_sup_gap", "n_certificates",
               "infeasibility_events", "violations")
SAVINGS_COLUMNS = ("mpr", "n_runs", "savings_mean", "savings_min", "savings_max",
                   "pooled_savings", "mean_sup_gap", "max_sup_gap", "n_certificates")
DEFAULT_SWEEP = (0.5, 0.6, 0.8, 1.0)


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _finite(value):
    """JSON-safe number: non-finite floats become ``null``."""
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True, allow_nan=False) + "\n")


# ---- file formats -------------------------------------------------------
def trajectory_rows(result: SimResult, cfg: RunConfig):
    grid = cfg.time_grid
    K = cfg.coefficients
    for rec in result.vehicles:
        if rec.trajectory is None:
            continue
        traj = rec.trajectory
        x = traj.positions
        v = traj.speeds
        n = x.size
        for i in range(n):
            vi = v[i] if i < n - 1 else v[-1]
            vn = v[i + 1] if i + 1 < n - 1 else v[-1]
            a = (vn - vi) / traj.theta
            tick = traj.start_tick + i
            yield {"vehicle_id": rec.id, "kind": rec.kind.value, "tick": tick,
                   "time_s": tick * traj.theta, "x_m": float(x[i]), "v_mps": float(vi),
                   "a_mps2": float(a), "fuel_rate": fuel_rate(float(vi), float(a), K),
                   "phase": phase_at(cfg.signal, tick, grid).value}


def write_trajectories(path: Path, result: SimResult, cfg: RunConfig) -> None:
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, TRAJECTORY_COLUMNS)
        w.writeheader()
        for row in trajectory_rows(result, cfg):
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def read_trajectories(path) -> list[dict]:
    """Parse a trajectories CSV back into typed rows."""
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRAJECTORY_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        out = []
        for row in reader:
            out.append({"vehicle_id": int(row["vehicle_id"]), "kind": row["kind"],
                        "tick": int(row["tick"]), "time_s": float(row["time_s"]),
                        "x_m": float(row["x_m"]), "v_mps": float(row["v_mps"]),
                        "a_mps2": float(row["a_mps2"]), "fuel_rate": float(row["fuel_rate"]),
                        "phase": row["phase"]})
        return out


def metrics(result: SimResult, savings: Optional[float] = None) -> dict:
    per_vehicle = []
    for rec in result.vehicles:
        cert = result.certificates.get(rec.id)
        per_vehicle.append({
            "id": rec.id, "kind": rec.kind.value, "scheduled_tick": rec.scheduled_tick,
            "entry_tick": rec.entry_tick, "departure_tick": rec.departure_tick,
            "travel_ticks": rec.travel_ticks, "fuel": _finite(rec.fuel),
            "batch_indices": list(rec.batch_indices),
            "gap_certificate": ({k: (_finite(v) if isinstance(v, float) else v)
                                 for k, v in cert.to_dict().items()} if cert else None),
        })
    lat = latency_profile(result)["per_call_ms"] if result.latencies else {}
    return {
        "mode": result.mode,
        "scenario": {"seed": result.scenario.seed, "mpr": result.scenario.mpr,
                     "prediction_error": result.scenario.prediction_error,
                     "n_vehicles": result.scenario.n_vehicles},
        "per_vehicle": per_vehicle,
        "aggregate": {
            "total_fuel": _finite(result.total_fuel),
            "savings_vs_benchmark": _finite(savings),
            "latency_mean_ms": lat.get("mean"), "latency_median_ms": lat.get("median"),
            "latency_p95_ms": lat.get("p95"),
            "infeasibility_events": len(result.infeasibility_events),
            "violations": [{"tick": v.tick, "vehicle_id": v.vehicle_id, "kind": v.kind,
                            "detail": v.detail} for v in result.violations],
        },
    }


def _mean_sup_gap(result: SimResult):
    gaps = [c.sup_gap for c in result.certificates.values() if math.isfinite(c.sup_gap)]
    return (float(np.mean(gaps)) if gaps else None), len(gaps)


def run_row(cmp) -> dict:
    r = cmp.result
    gap, n = _mean_sup_gap(r)
    return {"mpr": r.scenario.mpr, "seed": r.scenario.seed, "mode": r.mode,
            "prediction_error": r.scenario.prediction_error, "savings": cmp.savings,
            "tempc_fuel": cmp.tempc_fuel, "benchmark_fuel": cmp.benchmark_fuel,
            "n_common": cmp.n_common, "n_nonfinite": cmp.n_nonfinite, "mean_sup_gap": gap,
            "n_certificates": n, "infeasibility_events": len(r.infeasibility_events),
            "violations": len(r.violations)}


def _csv_value(v):
    if v is None:
        return ""
    return repr(float(v)) if isinstance(v, float) else v


def write_rows(path: Path, columns, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, columns)
        w.writeheader()
        for row in rows:
            w.writerow({k: _csv_value(row[k]) for k in columns})


def read_runs(path) -> list[dict]:
    """Parse a ``runs.csv`` written by ``benchmark``."""
    ints = ("seed", "n_common", "n_nonfinite", "n_certificates", "infeasibility_events",
            "violations")
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RUN_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        out = []
        for row in reader:
            rec = {}
            for k, v in row.items():
                if k == "mode":
                    rec[k] = v
                elif v == "":
                    rec[k] = None
                else:
                    rec[k] = int(v) if k in ints else float(v)
            out.append(rec)
        return out


def savings_table(rows) -> list[dict]:
    """One row per MPR: per-seed savings statistics and certificate gaps.

    ``savings_mean`` averages the per-seed savings; ``pooled_savings`` uses the
    summed fuel of all seeds.
    """
    out = []
    for mpr in sorted({r["mpr"] for r in rows}):
        group = [r for r in rows if r["mpr"] == mpr]
        s = [r["savings"] for r in group]
        theirs = math.fsum(r["benchmark_fuel"] for r in group)
        ours = math.fsum(r["tempc_fuel"] for r in group)
        gaps = [r["mean_sup_gap"] for r in group if r["mean_sup_gap"] is not None]
        out.append({"mpr": mpr, "n_runs": len(group), "savings_mean": float(np.mean(s)),
                    "savings_min": min(s), "savings_max": max(s),
                    "pooled_savings": (theirs - ours) / theirs if theirs > 0 else 0.0,
                    "mean_sup_gap": float(np.mean(gaps)) if gaps else None,
                    "max_sup_gap": max(gaps) if gaps else None,
                    "n_certificates": sum(r["n_certificates"] for r in group)})
    return out


# ---- commands -----------------------------------------------------------
def _config(args) -> RunConfig:
    try:
        return load_config(args.config)
    except ConfigError as exc:
        raise CliError(f"config error: {exc}", EXIT_CONFIG) from exc


def _batch(args, cfg: RunConfig):
    if not args.batch:
        raise CliError("--batch is required", EXIT_CONFIG)
    path = Path(args.batch)
    if not path.is_file():
        raise CliError(f"batch file not found: {path}", EXIT_CONFIG)
    try:
        return load_batch(path, params=cfg.vehicle, grid_spec=cfg.grid, plan=cfg.signal,
                          phi=cfg.scenario.phi, coefficients=cfg.coefficients)
    except (SchemaMismatch, HashMismatch, ParamMismatch) as exc:
        raise CliError(f"batch error: {exc}", EXIT_BATCH) from exc


def _out_dir(args, cfg: RunConfig) -> Path:
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _overrides(args) -> dict:
    out = {}
    if getattr(args, "seed", None) is not None:
        out["seed"] = args.seed
    if getattr(args, "mpr", None) is not None:
        out["mpr"] = args.mpr
    if getattr(args, "error", None) is not None:
        out["prediction_error"] = args.error
    return out


def cmd_build_batch(args) -> int:
    cfg = _config(args)
    out = Path(args.out or Path(cfg.output_dir) / "batch.json")
    try:
        batch = build_batch(cfg.vehicle, cfg.grid, cfg.signal, cfg.scenario.phi, cfg.coefficients)
    except EmptyBatch as exc:
        raise CliError(f"empty batch: {exc}", EXIT_BATCH) from exc
    out.parent.mkdir(parents=True, exist_ok=True)
    save_batch(batch, out)
    best = batch.entries[0]
    print(f"wrote {out}: {len(batch)} entries, T_min={batch.T_min} ticks, "
          f"min-fuel travel time {best.travel_ticks * cfg.theta:g} s "
          f"(fuel {best.fuel:.6g})")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _config(args)
    batch = _batch(args, cfg)
    try:
        scenario = cfg.scenario_for(args.mode, **_overrides(args))
    except ConfigError as exc:
        raise CliError(f"config error: {exc}", EXIT_CONFIG) from exc
    out = _out_dir(args, cfg)
    try:
        cmp = compare_to_benchmark(scenario, batch, cfg.vehicle, cfg.signal, cfg.time_grid,
                                   cfg.coefficients)
    except ScenarioMismatch as exc:
        raise CliError(f"batch error: {exc}", EXIT_BATCH) from exc
    result = cmp.result
    write_trajectories(out / "trajectories.csv", result, cfg)
    _write_json(out / "metrics.json", metrics(result, cmp.savings))
    print(f"{result.mode}: {sum(v.completed for v in result.vehicles)}/{len(result.vehicles)} "
          f"vehicles completed, savings {cmp.savings:.4f}, "
          f"{len(result.infeasibility_events)} infeasibility events, "
          f"{len(result.violations)} violations -> {out}")
    return EXIT_VIOLATIONS if result.violations else EXIT_OK


def _parse_sweep(text: Optional[str]) -> tuple:
    if not text:
        return DEFAULT_SWEEP
    try:
        values = tuple(float(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise CliError(f"--sweep: expected comma-separated MPR values, got {text!r}",
                       EXIT_CONFIG) from None
    if not values or any(not 0.0 <= v <= 1.0 for v in values):
        raise CliError("--sweep: MPR values must lie in [0, 1]", EXIT_CONFIG)
    return values


def cmd_benchmark(args) -> int:
    cfg = _config(args)
    batch = _batch(args, cfg)
    mprs = _parse_sweep(args.sweep) if args.mpr is None else (args.mpr,)
    base = cfg.scenario.seed if args.seed is None else args.seed
    if args.seeds < 1:
        raise CliError("--seeds must be >= 1", EXIT_CONFIG)
    extra = {} if args.error is None else {"prediction_error": args.error}
    try:
        scenarios = [cfg.scenario_for(args.mode, mpr=m, seed=base + k, **extra)
                     for m in mprs for k in range(args.seeds)]
    except ConfigError as exc:
        raise CliError(f"config error: {exc}", EXIT_CONFIG) from exc
    try:
        comparisons = sweep(scenarios, batch, cfg.vehicle, cfg.signal, cfg.time_grid,
                            cfg.coefficients, with_benchmark=True)
    except ScenarioMismatch as exc:
        raise CliError(f"batch error: {exc}", EXIT_BATCH) from exc
    out = _out_dir(args, cfg)
    rows = [run_row(c) for c in comparisons]
    write_rows(out / "runs.csv", RUN_COLUMNS, rows)
    table = savings_table(rows)
    write_rows(out / "savings.csv", SAVINGS_COLUMNS, table)
    for r in table:
        gap = "n/a" if r["mean_sup_gap"] is None else f"{r['mean_sup_gap']:.4f}"
        print(f"mpr={r['mpr']:g}: savings mean {r['savings_mean']:.4f} "
              f"[{r['savings_min']:.4f}, {r['savings_max']:.4f}], mean sup_gap {gap}")
    return EXIT_VIOLATIONS if any(r["violations"] for r in rows) else EXIT_OK


def cmd_report(args) -> int:
    src = Path(args.in_dir)
    files = sorted(src.rglob("runs.csv")) if src.is_dir() else []
    if not files:
        raise CliError(f"report: no runs.csv under {src}", EXIT_CONFIG)
    rows = []
    for f in files:
        try:
            rows.extend(read_runs(f))
        except (ValueError, KeyError) as exc:
            raise CliError(f"report: {exc}", EXIT_CONFIG) from exc
    if not rows:
        raise CliError(f"report: {src} holds no runs", EXIT_CONFIG)
    out = Path(args.out or src)
    out.mkdir(parents=True, exist_ok=True)
    groups = sorted({(r["mode"], r["prediction_error"]) for r in rows})
    savings, gaps = [], []
    for mode, err in groups:
        for r in savings_table([x for x in rows if (x["mode"], x["prediction_error"]) == (mode, err)]):
            savings.append({"mode": mode, "prediction_error": err, **r})
    for r in rows:
        gaps.append({k: r[k] for k in ("mode", "prediction_error", "mpr", "seed",
                                       "mean_sup_gap", "n_certificates")})
    write_rows(out / "savings_by_mpr.csv", ("mode", "prediction_error") + SAVINGS_COLUMNS, savings)
    write_rows(out / "gap_by_run.csv", ("mode", "prediction_error", "mpr", "seed",
                                        "mean_sup_gap", "n_certificates"), gaps)
    print(f"report over {len(rows)} runs from {len(files)} file(s) -> {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ecobatch", description=__doc__.splitlines()[0],
                                epilog="exit codes: 0 ok, 1 config, 2 batch, 3 violations")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build-batch", help="solve and save the trajectory batch")
    b.add_argument("--config")
    b.add_argument("--out", help="batch file path (default <output_dir>/batch.json)")
    b.set_defaults(func=cmd_build_batch)

    for name, func, text in (("simulate", cmd_simulate, "run one scenario"),
                             ("benchmark", cmd_benchmark, "sweep MPR x seeds against car following")):
        s = sub.add_parser(name, help=text)
        s.add_argument("--config")
        s.add_argument("--batch", required=True)
        s.add_argument("--mode", choices=("static", "rolling"), default="static")
        s.add_argument("--out", help="output directory (default from config)")
        s.add_argument("--seed", type=int)
        s.add_argument("--mpr", type=float)
        s.add_argument("--error", type=float, help="HDV prediction error e")
        if name == "benchmark":
            s.add_argument("--sweep", help="comma-separated MPR values (default 0.5,0.6,0.8,1.0)")
            s.add_argument("--seeds", type=int, default=5, help="seeds per MPR, counting up from --seed")
        s.set_defaults(func=func)

    r = sub.add_parser("report", help="aggregate benchmark outputs into per-MPR tables")
    r.add_argument("--in", dest="in_dir", required=True)
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"ecobatch: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
