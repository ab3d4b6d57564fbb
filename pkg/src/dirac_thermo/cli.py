"""Command line interface.

Exit codes: 0 success, 1 configuration error, 2 solver failure (the partial
trajectory is still written), 3 verification suite failed.
"""

from __future__ import annotations

import argparse
import copy
import csv
import itertools
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, initial_tuple, load_config, parse_config
from .dynamics import Trajectory, energy_balance_report, simulate
from .models import BUILTINS
from .open_dynamics import open_simulate
from .verify import run_checks

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CHECK = 0, 1, 2, 3
THREADS_ENV = "DIRAC_THERMO_THREADS"


def simulate_config(cfg: RunConfig) -> Trajectory:
    spec = cfg.spec
    model = spec.build(cfg.params)
    init = initial_tuple(cfg)
    run = open_simulate if spec.is_open else simulate
    return run(model, init, cfg.t_span, cfg.dt, scheme=cfg.scheme, projection=cfg.projection)


def make_report(traj: Trajectory) -> dict:
    k = len(traj.times) - 1
    final = {
        "t": float(traj.times[k]),
        "q": traj.q[k].tolist(),
        "v": traj.v[k].tolist(),
        "S": float(traj.S[k]),
    }
    if "N" in traj.extra:
        final["N"] = float(traj.extra["N"][k])
    return {
        "final_state": final,
        "max_energy_defect": energy_balance_report(None, traj)["max_defect"],
        "min_entropy_increment": float(np.min(np.diff(traj.S))) if len(traj.S) > 1 else 0.0,
        "max_dirac_residual": float(np.max(traj.dirac_residual)),
        "max_constraint_residual": float(np.max(np.abs(traj.constraint_residual), initial=0.0)),
    }


def execute(cfg: RunConfig, trajectory_path=None, report_path=None):
    """Run one configuration; returns ``(exit_code, report)``."""
    traj = simulate_config(cfg)
    trajectory_path = trajectory_path or cfg.trajectory_path
    report_path = report_path or cfg.report_path
    if trajectory_path:
        traj.to_csv(trajectory_path)
    report = make_report(traj) if len(traj.times) else {}
    if report_path:
        with open(report_path, "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
    if traj.failed:
        print(f"solver failure: {traj.message}", file=sys.stderr)
        return EXIT_SOLVER, report
    return EXIT_OK, report


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    code, report = execute(cfg)
    if not cfg.report_path:
        print(json.dumps(report, indent=2, sort_keys=True))
    return code


def cmd_check(args) -> int:
    if args.model not in BUILTINS:
        print(f"config error: model: unknown model {args.model!r} (available: {sorted(BUILTINS)})",
              file=sys.stderr)
        return EXIT_CONFIG
    tolerances = {}
    for item in args.tol or []:
        key, _, value = item.partition("=")
        try:
            tolerances[key] = float(value)
        except ValueError:
            print(f"config error: --tol {item}: expected key=value", file=sys.stderr)
            return EXIT_CONFIG
    report = run_checks(args.model, seed=args.seed, tolerances=tolerances)
    for c in report.checks:
        status = "PASS" if c.passed else "FAIL"
        print(f"{status} {c.name}: worst={c.worst_value:.3e} tol={c.tolerance:.1e}")
    print(f"overall: {'PASS' if report.overall else 'FAIL'}")
    if args.report:
        with open(args.report, "w") as fh:
            json.dump(report.to_dict(), fh, indent=2)
    return EXIT_OK if report.overall else EXIT_CHECK


def _set_param(raw: dict, dotted: str, value):
    params = raw.setdefault("model", {}).setdefault("params", {})
    keys = dotted.split(".")
    for k in keys[:-1]:
        params = params.setdefault(k, {})
    params[keys[-1]] = value


def expand_grid(grid) -> list:
    """A grid is ``{param: [values]}`` (Cartesian product) or a list of ``{param: value}``."""
    if isinstance(grid, dict):
        keys = list(grid)
        for k in keys:
            if not isinstance(grid[k], list):
                raise ConfigError(f"grid.{k}: expected a list of values")
        if not keys or any(len(grid[k]) == 0 for k in keys):
            return []
        return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]
    if isinstance(grid, list):
        if not all(isinstance(p, dict) for p in grid):
            raise ConfigError("grid: list entries must be objects")
        return list(grid)
    raise ConfigError("grid: expected an object or a list")


def cmd_sweep(args) -> int:
    try:
        with open(args.config) as fh:
            base = json.load(fh)
        with open(args.grid) as fh:
            points = expand_grid(json.load(fh))
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not points:
        print("config error: grid: empty parameter grid", file=sys.stderr)
        return EXIT_CONFIG

    configs = []
    for point in points:
        raw = copy.deepcopy(base)
        raw.pop("outputs", None)
        for key, value in point.items():
            _set_param(raw, key, value)
        try:
            configs.append(parse_config(raw))
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def one(k):
        run_dir = out / f"run_{k:03d}"
        run_dir.mkdir(exist_ok=True)
        try:
            return execute(configs[k], run_dir / "trajectory.csv", run_dir / "report.json")
        except Exception as exc:  # recorded per run, the sweep continues
            (run_dir / "error.txt").write_text(f"{type(exc).__name__}: {exc}\n")
            return EXIT_SOLVER, {}

    workers = max(1, min(len(points), int(os.environ.get(THREADS_ENV, os.cpu_count() or 1))))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(one, range(len(points))))

    keys = list(dict.fromkeys(k for p in points for k in p))
    with open(out / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(keys + ["final_S", "max_energy_defect", "exit"])
        for point, (code, report) in zip(points, results):
            final_S = report.get("final_state", {}).get("S", float("nan"))
            defect = report.get("max_energy_defect", float("nan"))
            writer.writerow([point.get(k, "") for k in keys]
                            + [f"{final_S:.17g}", f"{defect:.17g}", code])
    return EXIT_OK if all(code == EXIT_OK for code, _ in results) else EXIT_SOLVER


def cmd_list(args) -> int:
    for name, spec in BUILTINS.items():
        print(f"{name}\t{spec.description}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dirac-thermo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one configuration")
    p.add_argument("config")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check", help="run the verification suite on a built-in model")
    p.add_argument("model")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--tol", action="append", metavar="KEY=VALUE", help="override a tolerance")
    p.add_argument("--report", help="write the report as JSON")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("sweep", help="run a configuration over a parameter grid")
    p.add_argument("config")
    p.add_argument("--grid", required=True)
    p.add_argument("--out", default="sweep_out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("list-models", help="list built-in models")
    p.set_defaults(func=cmd_list)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
