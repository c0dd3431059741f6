"""Command-line orchestration: uncontrolled runs, optimization, capacity sweeps.

Scenarios read one JSON configuration (see `config.DEFAULTS`) and emit
plain CSV tables plus a summary.json and a manifest with content
checksums.  Floats are written with 17 significant digits and files use
fixed '\\n' newlines, so identical configurations produce byte-identical
outputs.
"""

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import config as cfgmod
from .errors import ConfigurationError, LineSearchError, NumericalError
from .grid import build_grid
from .model import ControlSchedule
from .objective import cost
from .optimizer import optimize
from .state_solver import solve_forward, total_infectious


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def _snapshot_rows(grid, layer):
    rows = []
    for k in range(grid.na):
        for m in range(grid.nx):
            rows.append(
                (
                    grid.a_nodes[k],
                    grid.x_nodes[m],
                    layer.data[0, k, m],
                    layer.data[1, k, m],
                    layer.data[2, k, m],
                    layer.data[3, k, m],
                )
            )
    return rows


def _series_rows(grid, controlled, uncontrolled):
    return [
        (grid.t_nodes[n], controlled[n], uncontrolled[n]) for n in range(grid.nt)
    ]


def _run_simulate(cfg: cfgmod.ExperimentConfig) -> dict:
    grid = build_grid(cfg.grid_spec())
    params = cfg.model_params()
    y0 = cfg.initial_state(grid)
    traj = solve_forward(y0, None, grid, params)
    series = total_infectious(traj, grid)
    report = cost(traj, None, grid, params)
    summary = {
        "scenario": "simulate",
        "j_total": report.j_total,
        "j_state": report.j_state,
        "j_control": report.j_control,
        "total_infectious_final_controlled": float(series[-1]),
        "total_infectious_final_uncontrolled": float(series[-1]),
    }
    tables = {
        "infectious_total.csv": (
            ("t", "total_controlled", "total_uncontrolled"),
            _series_rows(grid, series, series),
        ),
        "snapshot_final.csv": (
            ("a", "x", "S", "V", "I", "R"),
            _snapshot_rows(grid, traj.layers[-1]),
        ),
    }
    return {"summary": summary, "tables": tables}


def _run_optimize_member(cfg: cfgmod.ExperimentConfig, u_bar: float = None) -> dict:
    grid = build_grid(cfg.grid_spec())
    params = cfg.model_params(u_bar=u_bar)
    layout = cfg.layout()
    y0 = cfg.initial_state(grid)
    schedule0 = ControlSchedule.zeros(grid, layout)
    best_sched, best_traj, log = optimize(
        y0, schedule0, grid, params, layout, cfg.optimizer_config()
    )
    report = cost(best_traj, best_sched, grid, params)
    controlled = total_infectious(best_traj, grid)
    uncontrolled_traj = solve_forward(y0, None, grid, params)
    uncontrolled = total_infectious(uncontrolled_traj, grid)

    sched_rows = []
    for n in range(grid.nt - 1):
        for i in range(layout.n_regions):
            for j in range(layout.n_age_classes):
                sched_rows.append((grid.t_nodes[n], i + 1, j + 1, best_sched.values[n, i, j]))
    log_rows = list(log.rows())
    summary = {
        "scenario": "optimize",
        "u_bar": float(params.u_bar),
        "j_total": report.j_total,
        "j_state": report.j_state,
        "j_control": report.j_control,
        "max_u": float(np.max(best_sched.values)) if best_sched.values.size else 0.0,
        "iterations": len(log.records),
        "stop_reason": log.stop_reason,
        "total_infectious_final_controlled": float(controlled[-1]),
        "total_infectious_final_uncontrolled": float(uncontrolled[-1]),
    }
    tables = {
        "infectious_total.csv": (
            ("t", "total_controlled", "total_uncontrolled"),
            _series_rows(grid, controlled, uncontrolled),
        ),
        "snapshot_final.csv": (
            ("a", "x", "S", "V", "I", "R"),
            _snapshot_rows(grid, best_traj.layers[-1]),
        ),
        "control_schedule.csv": (("t", "i", "j", "u_ij"), sched_rows),
        "optimize_log.csv": (
            (
                "iter",
                "cost",
                "grad_norm",
                "step_size",
                "backtracks",
                "change_ratio",
                "stationarity",
            ),
            log_rows,
        ),
    }
    return {"summary": summary, "tables": tables}


def _sweep_member(doc_json: str, u_bar: float) -> dict:
    cfg = cfgmod.from_document(json.loads(doc_json))
    return _run_optimize_member(cfg, u_bar=u_bar)


def _member_dirname(u_bar: float) -> str:
    return f"u_bar_{format(float(u_bar), 'g')}"


def _run_sweep(cfg: cfgmod.ExperimentConfig, threads: int) -> dict:
    u_bars = cfg.sweep_u_bars
    doc_json = json.dumps(cfg.doc)
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            members = list(pool.map(_sweep_member, [doc_json] * len(u_bars), u_bars))
    else:
        members = [_sweep_member(doc_json, u) for u in u_bars]

    rows = []
    member_summaries = {}
    subdirs = {}
    for u_bar, member in zip(u_bars, members):
        s = member["summary"]
        rows.append(
            (float(u_bar), s["j_total"], s["j_state"], s["j_control"], s["max_u"], s["iterations"])
        )
        name = _member_dirname(u_bar)
        subdirs[name] = member
        member_summaries[name] = s
    summary = {"scenario": "sweep", "u_bars": [float(u) for u in u_bars], "members": member_summaries}
    tables = {
        "sweep_summary.csv": (
            ("u_bar", "J_total", "J_state", "J_control", "max_u", "iters"),
            rows,
        )
    }
    return {"summary": summary, "tables": tables, "subdirs": subdirs}


def _write_csv(path: str, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _emit(results: dict, out_dir: str, files: list, rel_prefix: str = "") -> None:
    os.makedirs(out_dir, exist_ok=True)
    summary_path = os.path.join(out_dir, "summary.json")
    with open(summary_path, "w", encoding="utf-8", newline="") as fh:
        json.dump(results["summary"], fh, indent=2, sort_keys=True)
        fh.write("\n")
    files.append(rel_prefix + "summary.json")
    for name, (header, rows) in sorted(results.get("tables", {}).items()):
        _write_csv(os.path.join(out_dir, name), header, rows)
        files.append(rel_prefix + name)
    for sub, sub_results in sorted(results.get("subdirs", {}).items()):
        _emit(sub_results, os.path.join(out_dir, sub), files, rel_prefix + sub + "/")


def write_outputs(results: dict, out_dir: str) -> dict:
    """Write every table and summary under out_dir; return the checksum manifest."""
    files: list = []
    _emit(results, out_dir, files)
    entries = []
    for rel in sorted(files):
        path = os.path.join(out_dir, rel)
        digest = hashlib.sha256()
        with open(path, "rb") as fh:
            payload = fh.read()
        digest.update(payload)
        entries.append({"name": rel, "sha256": digest.hexdigest(), "bytes": len(payload)})
    manifest = {"files": entries}
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8", newline="") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def _error_record(kind: str, exc: Exception) -> str:
    record = {"error": kind, "message": str(exc)}
    if isinstance(exc, ConfigurationError):
        record["field"] = exc.field
    return json.dumps(record, sort_keys=True)


def run(argv) -> int:
    """Execute one scenario; returns the process exit code."""
    parser = argparse.ArgumentParser(prog="epictrl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "optimize", "sweep"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the JSON configuration")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument(
            "--threads",
            type=int,
            default=None,
            help="parallel sweep members (default: EPICTRL_THREADS or 1)",
        )
    args = parser.parse_args(argv)

    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("EPICTRL_THREADS", "1"))

    try:
        cfg = cfgmod.load_config(args.config)
        doc = dict(cfg.doc)
        doc["scenario"] = args.command
        if args.out is not None:
            doc["out_dir"] = args.out
        cfg = cfgmod.from_document(doc)
    except ConfigurationError as exc:
        print(_error_record("configuration", exc), file=sys.stderr)
        return 2

    try:
        if cfg.scenario == "simulate":
            results = _run_simulate(cfg)
        elif cfg.scenario == "optimize":
            results = _run_optimize_member(cfg)
        else:
            results = _run_sweep(cfg, threads)
        write_outputs(results, cfg.out_dir)
    except (NumericalError, LineSearchError, OSError) as exc:
        print(_error_record("runtime", exc), file=sys.stderr)
        return 3
    return 0


def main() -> int:
    return run(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
