"""Command-line scenario runner.

Subcommands::

    pendulearn run scenario1_swingup.cfg --out runs/s1
    pendulearn ablate scenario1_swingup.cfg --mode nominal-plan-true-control
    pendulearn rmse-table runs/s1 [runs/s2 ...]
    pendulearn export-plots runs/s1

Non-convergence is a result, not an error: ``run`` exits 0 and flags it in
``report.json``.  Configuration and internal errors exit non-zero.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ScenarioConfig, parse_config
from .controller import Mode
from .gp import GPStack
from .io import REPORT_SCHEMA_VERSION, read_csv, write_atomic, write_csv, write_json
from .learnloop import ABLATIONS, IterationResult, Report, run_iteration, run_until_converged

log = logging.getLogger("pendulearn")

NO_LEARNING_MODES = ("nominal-plan-true-control", "true-plan-nominal-control", "frozen")
TRAJECTORY_COLUMNS = ["t", "q1", "q2", "qd1", "qd2", "q1_meas", "q2_meas", "u", "tau", "eps_a",
                      "balancing"]
REFERENCE_COLUMNS = ["t", "q1_ref", "q2_ref", "qd1_ref", "qd2_ref", "u_ref"]


# -- output writers ------------------------------------------------------

def write_trajectory(path, result: IterationResult) -> Path:
    lg = result.log
    rows = []
    for k, t in enumerate(lg.t):
        step = k < len(lg.tau)
        rows.append([t, *lg.q[k], *lg.qd[k], *lg.q_meas[k],
                     lg.u[k, 0] if step else None, lg.tau[k, 0] if step else None,
                     lg.eps_a[k, 0] if step else None,
                     int(lg.mode[k] is Mode.BALANCING) if step else None])
    return write_csv(path, TRAJECTORY_COLUMNS, rows, "trajectory")


def write_reference(path, result: IterationResult) -> Path:
    ref = result.reference
    rows = [[t, *ref.q[k], *ref.qd[k], ref.u[k, 0] if k < ref.N else None]
            for k, t in enumerate(ref.t)]
    return write_csv(path, REFERENCE_COLUMNS, rows, "reference")


def write_dataset(path, stack: GPStack, input_names, kind: str) -> Path:
    outputs = [f"y{j + 1}" for j in range(stack.outputs)]
    rows = [[*x, *y] for x, y in zip(stack.X, stack.Y)]
    return write_csv(path, list(input_names) + outputs, rows, kind)


def _write_run(out: Path, cfg: ScenarioConfig, report: Report, session) -> None:
    if report.baseline is not None:
        write_trajectory(out / "baseline_trajectory.csv", report.baseline)
        write_reference(out / "baseline_reference.csv", report.baseline)
    for res in report.iterations:
        write_trajectory(out / f"iter{res.index}_trajectory.csv", res)
        write_reference(out / f"iter{res.index}_reference.csv", res)
    write_dataset(out / "datasets_a.csv", session.eps_a, ["q1", "q2", "qd1", "qd2", "u"], "dataset_a")
    write_dataset(out / "datasets_p.csv", session.eps_p, ["q1", "q2", "qd1", "qd2", "qdd_a"],
                  "dataset_p")
    payload = report.to_dict()
    payload["schema_version"] = REPORT_SCHEMA_VERSION
    payload["ablation"] = session.ablation
    payload["seed"] = cfg.seed
    write_json(out / "report.json", payload)


# -- subcommands -----------------------------------------------------------

def _load(args) -> ScenarioConfig:
    path = args.config or args.config_path
    if path is None:
        raise ConfigError("no configuration given (positional path or --config)")
    cfg = parse_config(path)
    overrides = {}
    if args.max_iters is not None:
        overrides["run__max_iters"] = args.max_iters
    if args.seed is not None:
        overrides["scenario__seed"] = args.seed
    if getattr(args, "mode", None) and args.command == "run":
        overrides["run__ablation"] = args.mode
    if args.out is not None:
        overrides["output__directory"] = str(args.out)
    return cfg.with_overrides(**overrides) if overrides else cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    out = cfg.output_dir
    write_atomic(out / "effective.cfg", cfg.to_text())
    session = cfg.session()
    report = run_until_converged(session, cfg.max_iters, baseline=cfg["run"]["baseline"],
                                 scenario=cfg.name)
    _write_run(out, cfg, report, session)
    status = "converged" if report.converged else "did not converge"
    print(f"{cfg.name}: {status} after {report.iterations_used} iteration(s); report in {out}")
    return 0


def cmd_ablate(args) -> int:
    cfg = _load(args)
    modes = [args.mode] if args.mode else list(NO_LEARNING_MODES)
    base = cfg.output_dir
    write_atomic(base / "effective.cfg", cfg.to_text())
    summary = {"schema_version": REPORT_SCHEMA_VERSION, "scenario": cfg.name, "modes": {}}
    for mode in modes:
        session = cfg.session(ablation=mode)
        result = run_iteration(session, label=mode)
        box = cfg.ocp.box
        err = result.final_state - np.concatenate([cfg.ocp.x_goal.q, cfg.ocp.x_goal.qd])
        scale = np.array([box.position] * 2 + [box.velocity] * 2)
        result_dict = result.summary()
        result_dict["final_box_ratio"] = float(np.max(np.abs(err) / scale))
        summary["modes"][mode] = result_dict
        out = base / mode
        write_trajectory(out / "iter1_trajectory.csv", result)
        write_reference(out / "iter1_reference.csv", result)
        write_json(out / "report.json", {"schema_version": REPORT_SCHEMA_VERSION,
                                         "scenario": cfg.name, "ablation": mode,
                                         "converged": result.converged,
                                         "iterations": [result_dict]})
        print(f"{mode}: converged={result.converged} "
              f"final error = {result_dict['final_box_ratio']:.1f} x terminal box")
    write_json(base / "ablation.json", summary)
    return 0


def _load_report(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / "report.json"
    if not path.is_file():
        raise ConfigError(f"no report found at {path}")
    return json.loads(path.read_text())


def format_rmse_table(reports) -> str:
    """One row per pass, two columns (q1, q2) per scenario."""
    names = [r.get("scenario") or f"run {i + 1}" for i, r in enumerate(reports)]
    tables = [[(row["row"], row["rmse"]) for row in r["rmse_table"]] for r in reports]
    labels = []
    for t in tables:
        for label, _ in t:
            if label not in labels:
                labels.append(label)
    width = max([len(s) for s in labels] + [16])
    head1 = " " * width + "".join(f"  {n[:17]:^17}" for n in names)
    head2 = " " * width + "".join("  {:>8} {:>8}".format("q1", "q2") for _ in names)
    lines = [head1, head2]
    for label in labels:
        cells = []
        for t in tables:
            vals = dict(t).get(label)
            cells.append("  " + (" ".join(f"{v:8.3f}" for v in vals) if vals else f"{'--':>8} {'--':>8}"))
        lines.append(f"{label:<{width}}" + "".join(cells))
    return "\n".join(lines)


def cmd_rmse_table(args) -> int:
    reports = [_load_report(p) for p in args.reports]
    print(format_rmse_table(reports))
    return 0


def _plot_rows(traj_path, ref_path):
    _, tcols, T = read_csv(traj_path)
    _, rcols, R = read_csv(ref_path)
    n = min(len(T), len(R))
    rows = []
    for k in range(len(T)):
        q = T[k, 1:3]
        if k < n:
            qr = R[k, 1:3]
        else:
            qr = R[-1, 1:3]
        rows.append([T[k, 0], q[0], qr[0], q[0] - qr[0], q[1], qr[1], q[1] - qr[1], T[k, -1]])
    return rows


PLOT_COLUMNS = ["t", "q1", "q1_ref", "e1", "q2", "q2_ref", "e2", "balancing"]


def cmd_export_plots(args) -> int:
    run_dir = Path(args.run_dir)
    out = Path(args.out) if args.out else run_dir / "plots"
    written = 0
    panels = []
    if (run_dir / "baseline_trajectory.csv").is_file():
        panels.append(("without_learning", "baseline"))
    k = 1
    while (run_dir / f"iter{k}_trajectory.csv").is_file():
        panels.append((f"iteration{k}", f"iter{k}"))
        k += 1
    for mode in ABLATIONS:
        if (run_dir / mode / "iter1_trajectory.csv").is_file():
            panels.append((f"ablation_{mode}", f"{mode}/iter1"))
    if not panels:
        raise ConfigError(f"no trajectories found in {run_dir}")
    for name, stem in panels:
        rows = _plot_rows(run_dir / f"{stem}_trajectory.csv", run_dir / f"{stem}_reference.csv")
        write_csv(out / f"{name}.csv", PLOT_COLUMNS, rows, "plot")
        written += 1
    print(f"wrote {written} plot table(s) to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pendulearn", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_args(p):
        p.add_argument("config_path", nargs="?", help="scenario configuration file")
        p.add_argument("--config", help="scenario configuration file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--max-iters", type=int, dest="max_iters")
        p.add_argument("--seed", type=int)
        p.add_argument("--mode", choices=ABLATIONS)

    scenario_args(sub.add_parser("run", help="iterate plan/execute/learn until convergence"))
    scenario_args(sub.add_parser("ablate", help="run the no-learning comparison modes"))
    p = sub.add_parser("rmse-table", help="print tracking RMSE per iteration")
    p.add_argument("reports", nargs="+", help="run directories or report.json files")
    p = sub.add_parser("export-plots", help="write plot-ready CSV tables")
    p.add_argument("run_dir")
    p.add_argument("--out")
    return parser


COMMANDS = {"run": cmd_run, "ablate": cmd_ablate, "rmse-table": cmd_rmse_table,
            "export-plots": cmd_export_plots}


def run_command(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # internal failure: report and exit non-zero
        log.debug("internal failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_command())
