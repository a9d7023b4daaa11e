"""Result bundles: plot-ready CSVs plus one JSON record per run.

Every CSV has a header row and a fixed column order.  Routes are numbered
from 1 in network order (grouped by O-D pair).

=====================  ========================================================
file                   columns
=====================  ========================================================
trajectory.csv         tau, f_1..f_K, [q_1..q_R (elastic)], z, norm_J
equilibria.csv         index, kind, f_1..f_K, c_1..c_K, [q_1..q_R], norm_J, hits
convergence.csv        iteration, tau, norm_J
curves.csv             t, in_1, out_1, .., in_K, out_K
travel_times.csv       bin, t_start, g_1..g_K, c_1..c_K
=====================  ========================================================

Floats are written with ``repr`` so identical runs give identical bytes.
The wall-clock time appears only in ``result.json``.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .exceptions import ScenarioIOError


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def write_csv(path, header, rows) -> None:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise ScenarioIOError(f"{path}: {exc.strerror or exc}") from None


def _labels(prefix, n):
    return [f"{prefix}_{k + 1}" for k in range(n)]


def write_trajectory(path, traj, n_routes: int) -> None:
    elastic = bool(traj.demand)
    n_od = len(traj.demand[0]) if elastic else 0
    header = ["tau", *_labels("f", n_routes), *_labels("q", n_od), "z", "norm_J"]
    rows = []
    for i in range(len(traj)):
        q = list(traj.demand[i]) if elastic else []
        rows.append([traj.tau[i], *traj.flows[i], *q, traj.z[i], traj.norm_J[i]])
    write_csv(path, header, rows)


def write_equilibria(path, reports, n_routes: int, hits=None) -> None:
    with_q = any(r.demand is not None for r in reports)
    n_od = len(reports[0].demand) if with_q else 0
    header = ["index", "kind", *_labels("f", n_routes), *_labels("c", n_routes),
              *_labels("q", n_od), "norm_J", "hits"]
    rows = []
    for i, r in enumerate(reports):
        q = list(r.demand) if with_q else []
        rows.append([i + 1, str(r.kind), *r.flows, *r.costs, *q, r.norm_J, "" if hits is None else hits[i]])
    write_csv(path, header, rows)


def write_convergence(path, history) -> None:
    write_csv(path, ["iteration", "tau", "norm_J"], history)


def write_curves(path, report) -> None:
    K = len(report.curves)
    header = ["t"]
    for k in range(K):
        header += [f"in_{k + 1}", f"out_{k + 1}"]
    cols = [report.times]
    for lr in report.curves:
        cols += [lr.origin, lr.destination]
    write_csv(path, header, np.column_stack(cols))


def write_travel_times(path, report, dt: float) -> None:
    K, N = report.g.shape
    header = ["bin", "t_start", *_labels("g", K), *_labels("c", K)]
    rows = [[n, n * dt, *report.g[:, n], *report.costs[:, n]] for n in range(N)]
    write_csv(path, header, rows)


def jsonable(x):
    if isinstance(x, np.ndarray):
        return [jsonable(v) for v in x.tolist()]
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, dict):
        return {k: jsonable(v) for k, v in x.items()}
    if isinstance(x, (np.floating, float)):
        return None if math.isnan(float(x)) else float(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


def write_json(path, record) -> None:
    try:
        Path(path).write_text(json.dumps(jsonable(record), indent=2) + "\n")
    except OSError as exc:
        raise ScenarioIOError(f"{path}: {exc.strerror or exc}") from None


def report_record(report) -> dict:
    """JSON-ready summary of a static or elastic equilibrium report."""
    rec = dict(kind=str(report.kind), flows=report.flows, costs=report.costs, norm_J=report.norm_J,
               tau=report.tau, steps=report.steps, n_perturbations=report.n_perturbations,
               witnesses=[dict(od=w.od, unused=w.unused + 1, used=w.used + 1) for w in report.witnesses])
    if report.demand is not None:
        rec["demand"] = report.demand
    return rec


def prepare_dir(out) -> Path:
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ScenarioIOError(f"{out}: {exc.strerror or exc}") from None
    return out
