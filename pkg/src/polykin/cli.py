"""Command-line interface: simulate, steady, verify, sweep, characteristics.

Artifacts are written atomically (temp file then rename) into the output
directory (--out, else POLYKIN_OUT, else ./out). Every artifact embeds the
tool version and the scenario config hash. Exit codes: 0 success, 1 config
parse error, 2 validation failure, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import __version__, characteristics, diagnostics, kinetics, steady, verification
from .errors import (
    ConfigError,
    LeakOverflowError,
    PolykinError,
    RuntimeFailure,
    ValidationError,
)
from .scenario import Scenario, load_scenario
from .state import SizeGrid, write_snapshot

EXIT_CONFIG, EXIT_VALIDATION, EXIT_RUNTIME = 1, 2, 3


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _out_dir(args) -> Path:
    if args.out:
        return Path(args.out)
    return Path(os.environ.get("POLYKIN_OUT", "out"))


def _meta(scenario: Scenario | None) -> dict:
    meta = {"version": __version__}
    if scenario is not None:
        meta["config_sha256"] = scenario.config_hash
    return meta


def _write_json(path: Path, payload: dict) -> None:
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _apply_resolution(scenario: Scenario, n: int | None) -> Scenario:
    if n is None:
        return scenario
    grid = SizeGrid(x_max=scenario.grid.x_max, n_cells=n)
    sc = replace(scenario, grid=grid)
    steady_opts = scenario.steady
    if steady_opts is not None:
        sc = replace(sc, steady=replace(steady_opts, n_cells=n))
    return sc


def _error_payload(exc: PolykinError) -> dict:
    payload = {"error": {"type": type(exc).__name__, "message": str(exc)}}
    if isinstance(exc, LeakOverflowError):
        payload["error"]["grid_hint"] = {"x_max_suggested": exc.x_max_suggested}
    return payload


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.config)
    scenario = _apply_resolution(scenario, args.resolution)
    out = _out_dir(args)
    meta = _meta(scenario)
    report: dict = {"version": __version__, "config_sha256": scenario.config_hash,
                    "scenario": scenario.name}
    try:
        report["assumptions"] = scenario.validate().to_dict()
    except ValidationError as exc:
        report["assumptions_error"] = str(exc)
        _write_json(out / "report.json", report)
        print(f"validation failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        if scenario.solver == "lagrangian":
            return _simulate_lagrangian(scenario, out, meta, report)
        series = kinetics.run(scenario)
    except RuntimeFailure as exc:
        report.update(_error_payload(exc))
        _write_json(out / "report.json", report)
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    series_text = _series_csv_text(series, meta)
    _atomic_write(out / "series.csv", series_text)
    for idx, snap in enumerate(series.snapshots):
        snap_path = out / f"snapshot_{idx:04d}.csv"
        write_snapshot(snap, snap_path, meta=meta)
    final = series.final_state
    write_snapshot(final, out / "final_state.csv", meta=meta)
    report["conservation"] = {
        "audit": abs(final.V + float(series.M1[-1]) + final.leaked - final.M),
        "leaked": final.leaked,
        "clipped": final.clipped,
        "absorbed_number": final.absorbed,
    }
    if len(series.snapshots) >= 3:
        report["monomer_ode_residual"] = kinetics.consistency_check_dVdt(series, scenario.model)
    _write_json(out / "report.json", report)
    return 0


def _series_csv_text(series: kinetics.TimeSeries, meta: dict) -> str:
    import io

    buf = io.StringIO()
    names = list(series.COLUMNS) + sorted(series.extras)
    for k, v in meta.items():
        buf.write(f"# {k}={v}\n")
    buf.write(f"# M={series.M!r}\n")
    buf.write(",".join(names) + "\n")
    cols = [getattr(series, n) if n in series.COLUMNS else series.extras[n] for n in names]
    for row in zip(*cols):
        buf.write(",".join("%.17g" % v for v in row) + "\n")
    return buf.getvalue()


def _simulate_lagrangian(scenario: Scenario, out: Path, meta: dict, report: dict) -> int:
    model = scenario.model
    if model.fragmentation.active or model.nucleation.epsilon != 0:
        print("particle solver needs breakage and nucleation switched off", file=sys.stderr)
        report["error"] = {"type": "RegimeError",
                           "message": "particle solver requires the pure growth-decay regime"}
        _write_json(out / "report.json", report)
        return EXIT_VALIDATION
    ens = scenario.initial_ensemble()
    lag = characteristics.run_particles(
        ens, model.depoly, t_end=scenario.options.t_end,
        stride=scenario.options.output_stride, dt=scenario.options.lagrangian_dt)
    xbar = None
    if scenario.track_w2:
        xbar, _ = diagnostics.predict_xbar(scenario.total_mass, ens.number, model.depoly)
    series = kinetics.series_from_particles(lag, model, scenario.total_mass, xbar=xbar)
    _atomic_write(out / "series.csv", _series_csv_text(series, meta))
    lines = [f"# {k}={v}" for k, v in meta.items()]
    n = len(ens.X)
    lines.append("t," + ",".join(f"X_{j + 1}" for j in range(n)) + ",V,g")
    for row in lag.trajectory_rows():
        lines.append(",".join("%.17g" % v for v in row))
    _atomic_write(out / "trajectory.csv", "\n".join(lines) + "\n")
    report["particles"] = n
    _write_json(out / "report.json", report)
    return 0


def cmd_characteristics(args) -> int:
    scenario = load_scenario(args.config)
    scenario = replace(scenario, solver="lagrangian")
    out = _out_dir(args)
    report = {"version": __version__, "config_sha256": scenario.config_hash,
              "scenario": scenario.name}
    try:
        report["assumptions"] = scenario.validate().to_dict()
    except ValidationError as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        return _simulate_lagrangian(scenario, out, _meta(scenario), report)
    except RuntimeFailure as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def cmd_steady(args) -> int:
    scenario = load_scenario(args.config)
    scenario = _apply_resolution(scenario, args.resolution)
    if scenario.steady is None:
        raise ConfigError("scenario lacks a [steady] section")
    out = _out_dir(args)
    report: dict = {"version": __version__, "config_sha256": scenario.config_hash,
                    "scenario": scenario.name}
    try:
        assumptions = scenario.validate()
    except ValidationError as exc:
        report["assumptions_error"] = str(exc)
        _write_json(out / "steady_report.json", report)
        print(f"validation failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    report["assumptions"] = assumptions.to_dict()
    opts = scenario.steady
    path = args.path or opts.path
    grid = SizeGrid(x_max=opts.R, n_cells=opts.n_cells)
    try:
        res, U = steady.solve_full_profile(
            opts.R, opts.eps_offset, grid, scenario.model, path=path,
            lambda_tol=opts.lambda_tol, bracket_margin=opts.bracket_margin,
            scan_points=opts.scan_points)
        state_report = steady.scale_to_mass(
            res.Vbar, U, scenario.total_mass, grid, scenario.model, result=res)
        steady.verify_estimates(state_report, scenario.model, k_max=opts.k_max)
    except RuntimeFailure as exc:
        report.update(_error_payload(exc))
        if hasattr(exc, "scan"):
            report["scan"] = {"V": exc.scan[0], "lambda": exc.scan[1]}
        _write_json(out / "steady_report.json", report)
        print(f"steady solve failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    report["steady"] = state_report.to_dict()
    report["scan"] = {"V": res.scan_V.tolist(), "lambda": res.scan_lam.tolist()}
    _write_json(out / "steady_report.json", report)
    profile_path = out / "steady_profile.csv"
    state_report.write_profile(profile_path, meta=_meta(scenario))
    bad = [c.name for c in state_report.estimate_checks if not c.passed]
    if bad:
        print("estimate checks failed: " + ", ".join(bad), file=sys.stderr)
        return EXIT_RUNTIME
    return 0


def cmd_verify(args) -> int:
    out = _out_dir(args)
    results = verification.run_suite(args.suite, resolution=args.scale)
    for result in results:
        print(result.line())
    payload = {
        "version": __version__,
        "suite": args.suite,
        "passed": all(r.passed for r in results),
        "criteria": [r.to_dict() for r in results],
    }
    _write_json(out / f"verify_{args.suite}.json", payload)
    return 0 if payload["passed"] else EXIT_RUNTIME


def _set_nested(raw: dict, dotted: str, value: float) -> None:
    keys = dotted.split(".")
    table = raw
    for key in keys[:-1]:
        nxt = table.get(key)
        if not isinstance(nxt, dict):
            raise ConfigError(f"sweep axis {dotted!r} does not name a table entry")
        table = nxt
    leaf = keys[-1]
    if leaf not in table:
        raise ConfigError(f"sweep axis {dotted!r} not present in the scenario")
    old = table[leaf]
    table[leaf] = int(value) if isinstance(old, int) and float(value).is_integer() else value


def _sweep_one(payload: tuple) -> dict:
    raw, axis, value, fit_kind = payload
    import copy

    from .scenario import build_scenario

    raw = copy.deepcopy(raw)
    _set_nested(raw, axis, value)
    row: dict = {"value": value}
    try:
        sc = build_scenario(raw, name=f"sweep_{value}")
        sc.validate()
        series = kinetics.run(sc)
        row.update(
            status="ok",
            V_end=float(series.V[-1]),
            rho_end=float(series.rho[-1]),
            M2_end=float(series.M2[-1]),
        )
        if fit_kind:
            for rep in diagnostics.fit_rates(series, sc.model, fit_kind):
                row[f"fit_{rep.estimator}"] = rep.fitted
    except PolykinError as exc:
        row.update(status="failed", error=f"{type(exc).__name__}: {exc}")
    return row


def cmd_sweep(args) -> int:
    if not args.values:
        print("empty sweep value list", file=sys.stderr)
        return EXIT_VALIDATION
    path = Path(args.config)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file {path}: {exc}") from None
    if sys.version_info >= (3, 11):
        import tomllib
    else:
        import tomli as tomllib
    try:
        raw = tomllib.loads(data.decode("utf-8"))
    except Exception as exc:
        raise ConfigError(f"malformed scenario file {path}: {exc}") from None
    values = [float(v) for v in args.values.split(",") if v.strip()]
    if not values:
        print("empty sweep value list", file=sys.stderr)
        return EXIT_VALIDATION
    # Fail fast on an axis typo before spawning workers.
    _set_nested(json.loads(json.dumps(raw)), args.axis, values[0])
    tasks = [(raw, args.axis, v, args.fit) for v in values]
    if args.workers == 1:
        rows = [_sweep_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(_sweep_one, tasks))
    keys: list[str] = ["value", "status"]
    for row in rows:
        for key in row:
            if key not in keys:
                keys.append(key)
    import hashlib

    digest = hashlib.sha256(data).hexdigest()
    lines = [f"# version={__version__}", f"# config_sha256={digest}",
             f"# axis={args.axis}", ",".join(keys)]
    for row in rows:
        lines.append(",".join(str(row.get(k, "")) for k in keys))
    out = _out_dir(args)
    _atomic_write(out / "sweep.csv", "\n".join(lines) + "\n")
    if any(row["status"] != "ok" for row in rows):
        print("some sweep rows failed; see sweep.csv", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polykin",
        description="Nucleation-growth-fragmentation kinetics: simulation and steady profiles",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate a scenario and write series/snapshots")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--resolution", type=int, default=None, help="override grid cell count")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("characteristics", help="particle run along characteristics")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_characteristics)

    p = sub.add_parser("steady", help="construct the steady profile")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--resolution", type=int, default=None)
    p.add_argument("--path", choices=("faithful", "direct"), default=None)
    p.set_defaults(func=cmd_steady)

    p = sub.add_parser("verify", help="run an acceptance bundle")
    p.add_argument("--suite", default="all",
                   choices=("t21", "t23", "t24", "t26", "t28", "props", "all"))
    p.add_argument("--out", default=None)
    p.add_argument("--scale", type=float, default=1.0,
                   help="resolution multiplier for the bundled scenarios")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="run a scenario over a list of parameter values")
    p.add_argument("--config", required=True)
    p.add_argument("--axis", required=True, help="dotted key, e.g. model.nucleation.nucleus_order")
    p.add_argument("--values", required=True, help="comma separated values")
    p.add_argument("--fit", default=None, help="rate-fit bundle for each row (e.g. t24_d0pos)")
    p.add_argument("--out", default=None)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except RuntimeFailure as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
