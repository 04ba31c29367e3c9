"""Command line entry point: ``run``, ``verify`` and ``sweep``.

Each run writes ``trajectory.csv``, ``report.json`` and the single-run
``scenario.cfg`` into its own subdirectory of ``--out``. The exit status is
0 iff every report status is ``pass``.
"""

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._validation import ValidationError
from .config import ConfigError, Scenario, load_config, render_scenarios
from .dynamics import Trajectory
from .verify import verify_run, verify_trajectory

logger = logging.getLogger("mmflow")

SEED_ENV = "MMFLOW_SEED"


@dataclass
class RunResult:
    scenario: str
    run_name: str
    param: str
    value: float
    status: str
    report: dict


def apply_seed_override(scenarios, environ=None):
    """Replace every scenario seed with ``$MMFLOW_SEED`` when it is set."""
    environ = os.environ if environ is None else environ
    raw = environ.get(SEED_ENV)
    if raw is None or raw == "":
        return list(scenarios)
    try:
        seed = int(raw)
    except ValueError:
        raise ValidationError(f"{SEED_ENV} must be an integer, got {raw!r}")
    return [sc.with_params(seed=seed) for sc in scenarios]


def _single_run_scenario(sc, value):
    if sc.sweep is None:
        return sc
    key = sc.sweep[0]
    return Scenario(sc.name, {**sc.params, key: value}, sc.checks_enabled, None, sc.fault, sc.base_dir)


def _execute(task):
    run_name, scenario_text, cfg, checks, fault, run_dir = task
    report, traj = verify_run(cfg, checks=checks, fault=fault)
    os.makedirs(run_dir, exist_ok=True)
    traj.to_csv(os.path.join(run_dir, "trajectory.csv"))
    with open(os.path.join(run_dir, "report.json"), "w") as fh:
        fh.write(report.to_json())
    with open(os.path.join(run_dir, "scenario.cfg"), "w") as fh:
        fh.write(scenario_text)
    return report.to_dict()


def run(scenarios, out_dir, parallelism=1):
    """Execute every (expanded) scenario and return ``(exit_status, results)``."""
    tasks, meta = [], []
    for sc in scenarios:
        for run_name, value, cfg in sc.runs():
            text = render_scenarios([_single_run_scenario(sc, value)])
            tasks.append((run_name, text, cfg, sc.checks_enabled, sc.fault, os.path.join(out_dir, run_name)))
            meta.append((sc.name, run_name, sc.sweep[0] if sc.sweep else None, value))
    if not tasks:
        return 0, []
    if parallelism > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            reports = list(pool.map(_execute, tasks))
    else:
        reports = [_execute(t) for t in tasks]
    results = []
    for (name, run_name, param, value), rep in zip(meta, reports):
        results.append(RunResult(name, run_name, param, value, rep["status"], rep))
        print(summary_line(run_name, rep))
    exit_status = 0 if all(r.status == "pass" for r in results) else 1
    return exit_status, results


def summary_line(run_name, report):
    parts = [f"{run_name}: {report['status']}"]
    for c in report["checks"]:
        parts.append(f"{c['name']}={c['status']}({c['worst_margin']:.3g})")
    return "  ".join(parts)


def sweep_summary(results):
    """One row per sweep value of a single swept scenario.

    Rows carry the value, report status, the worst theorem-1 margin and the
    crossing check's status and crossing time (``None`` when not crossed).
    """
    if not results:
        return []
    names = {r.scenario for r in results}
    if len(names) != 1:
        raise ValidationError(f"sweep summary needs one scenario, got {sorted(names)}")
    rows = []
    for r in results:
        checks = {c["name"]: c for c in r.report["checks"]}
        th = checks.get("theorem1")
        cr = checks.get("crossing")
        rows.append(
            {
                "param": r.param,
                "value": r.value,
                "status": r.status,
                "theorem1_margin": None if th is None else th["worst_margin"],
                "crossing_status": None if cr is None else cr["status"],
                "crossing_time": None if cr is None else cr["details"].get("crossing_time"),
            }
        )
    return rows


def format_table(rows):
    if not rows:
        return ""
    cols = list(rows[0])
    cells = [[("" if row[c] is None else (f"{row[c]:.6g}" if isinstance(row[c], float) else str(row[c]))) for c in cols] for row in rows]
    widths = [max(len(c), *(len(r[i]) for r in cells)) for i, c in enumerate(cols)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths))]
    lines += ["  ".join(v.ljust(w) for v, w in zip(r, widths)) for r in cells]
    return "\n".join(lines)


def _infer_status(traj, cfg):
    # a stored trajectory that stops short of the horizon ended in blow-up
    if traj.times[-1] < cfg.t_end - 0.5 * cfg.dt:
        traj.status = "blow_up"
    return traj


def _load_all(paths):
    scenarios = []
    for path in paths:
        try:
            scenarios += load_config(path)
        except ConfigError as exc:
            exc.path = path
            raise
    names = [sc.name for sc in scenarios]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise ValidationError(f"scenario names repeat across config files: {', '.join(dupes)}")
    return scenarios


def cmd_run(args):
    scenarios = apply_seed_override(_load_all(args.config))
    status, _ = run(scenarios, args.out, args.jobs)
    return status


def cmd_verify(args):
    config_path = args.config or os.path.join(os.path.dirname(os.path.abspath(args.trajectory)), "scenario.cfg")
    scenarios = load_config(config_path)
    if len(scenarios) != 1 or scenarios[0].sweep is not None:
        raise ValidationError(f"{config_path} must describe exactly one unswept scenario")
    sc = scenarios[0]
    cfg = sc.sim
    traj = _infer_status(Trajectory.from_csv(args.trajectory), cfg)
    report = verify_trajectory(traj, cfg, checks=sc.checks_enabled, fault=sc.fault)
    with open(args.report, "w") as fh:
        fh.write(report.to_json())
    print(summary_line(sc.name, report.to_dict()))
    return 0 if report.status == "pass" else 1


def _parse_values(text):
    try:
        values = json.loads(text if text.strip().startswith("[") else f"[{text}]")
    except json.JSONDecodeError:
        raise ValidationError(f"cannot parse sweep values {text!r}")
    if not values or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in values):
        raise ValidationError("sweep values must be a non-empty list of numbers")
    if not all(np.isfinite(values)):
        raise ValidationError("sweep values must be finite")
    return values


def cmd_sweep(args):
    values = _parse_values(args.values)
    scenarios = apply_seed_override(_load_all(args.config))
    exit_status = 0
    for sc in scenarios:
        swept = sc.with_sweep(args.param, values)
        swept.runs()
        status, results = run([swept], args.out, args.jobs)
        exit_status = max(exit_status, status)
        rows = sweep_summary(results)
        table = format_table(rows)
        print(table)
        with open(os.path.join(args.out, f"{sc.name}__sweep_summary.txt"), "w") as fh:
            fh.write(table + "\n")
    return exit_status


def build_parser():
    parser = argparse.ArgumentParser(prog="mmflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate and verify every scenario in the config files")
    p.add_argument("--config", required=True, nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="re-check a stored trajectory")
    p.add_argument("--trajectory", required=True)
    p.add_argument("--report", required=True, help="where to write the recomputed report")
    p.add_argument("--config", help="scenario file (default: scenario.cfg beside the trajectory)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="sweep one numeric parameter of each scenario")
    p.add_argument("--config", required=True, nargs="+")
    p.add_argument("--param", required=True)
    p.add_argument("--values", required=True, help="e.g. '[0.2, 0.4, 0.8]'")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        logger.error("--jobs must be >= 1")
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        for line, msg in exc.errors:
            logger.error("%s:%d: %s", getattr(exc, "path", args.config), line, msg)
        return 2
    except (ValidationError, OSError) as exc:
        logger.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
