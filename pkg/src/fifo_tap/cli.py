"""Command line: ``fifo-tap <command> SCENARIO [options]``.

Each command prints a JSON summary on stdout and, with ``--out DIR``, writes
a result bundle there (see ``fifo_tap.output``).  Failures print a JSON
error record on stderr and exit with 2 (invalid input), 3 (no convergence)
or 4 (file I/O).  ``FIFO_TAP_LOG`` sets the log level (default WARNING).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .dynamic import random_profile, solve_dynamic, split_profile
from .elastic import solve_elastic, solve_elastic_nested
from .enumeration import enumerate_equilibria
from .exceptions import FifoTapError, ValidationError
from .output import (
    jsonable,
    prepare_dir,
    report_record,
    write_convergence,
    write_curves,
    write_equilibria,
    write_json,
    write_trajectory,
    write_travel_times,
)
from .scenario import load_scenario, scenario_to_dict
from .static import Kind, classify, find_ue

logger = logging.getLogger("fifo_tap")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _split(text: str):
    if text == "random":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected a share in [0, 1] or 'random'") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fifo-tap", description="Route-flow dynamics for traffic assignment.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def command(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("scenario", help="scenario JSON file")
        sp.add_argument("--out", metavar="DIR", help="write the result bundle to DIR")
        sp.add_argument("--seed", type=int, help="random seed (overrides the scenario)")
        sp.add_argument("--dtau", type=float, help="decision step")
        sp.add_argument("--tol", type=float, help="convergence tolerance on ||J||")
        return sp

    for name, help_ in (("solve-static", "integrate to an equilibrium, perturbing out of PUE"),
                        ("solve-elastic", "elastic-demand equilibrium")):
        sp = command(name, help_)
        sp.add_argument("--max-perturb", type=int, help="perturbation limit")
    sub.choices["solve-elastic"].add_argument("--nested", action="store_true",
                                              help="outer demand loop around fixed-demand solves")

    sp = command("solve-dynamic", "time-dependent equilibrium on the point-queue loader")
    sp.add_argument("--max-perturb", type=int, help="perturbation limit")
    sp.add_argument("--init-split", type=_split, metavar="C",
                    help="share of demand on each O-D's first route, or 'random'")

    sp = command("classify", "label a flow state as UE or PUE")
    sp.add_argument("--flows", type=_floats, help="comma-separated route flows (default: solver.initial_flows)")

    sp = command("enumerate-equilibria", "multi-start search for all equilibria")
    sp.add_argument("--starts", type=int, default=200, help="number of starts (default 200)")
    return p


def _initial_flows(sc) -> np.ndarray:
    if "initial_flows" in sc.solver:
        return np.array(sc.solver["initial_flows"])
    net = sc.network
    sizes = np.bincount(net.route_od, minlength=net.n_od)
    return (net.demand / sizes)[net.route_od]


def _static_mode(sc, command):
    if sc.mode == "dynamic":
        raise ValidationError(f"{command} needs a static or elastic scenario, got mode 'dynamic'")


def run_solve_static(sc, args, out):
    _static_mode(sc, args.command)
    cfg = sc.solver_config(delta_tau=args.dtau, tol_J=args.tol, max_perturbations=args.max_perturb)
    rep = find_ue(sc.network, _initial_flows(sc), cfg)
    if out:
        write_trajectory(out / "trajectory.csv", rep.trajectory, sc.network.n_routes)
        write_equilibria(out / "equilibria.csv", [rep], sc.network.n_routes)
    return report_record(rep), rep.kind


def run_solve_elastic(sc, args, out):
    if sc.mode != "elastic":
        raise ValidationError(f"solve-elastic needs an elastic scenario, got mode {sc.mode!r}")
    cfg = sc.solver_config(delta_tau=args.dtau, tol_J=args.tol, max_perturbations=args.max_perturb)
    f0 = _initial_flows(sc)
    if args.nested:
        rep = solve_elastic_nested(sc.network, sc.demand_fns, sc.network.od_sum(f0), cfg, f0=f0)
    else:
        rep = solve_elastic(sc.network, sc.demand_fns, f0, cfg)
    if out:
        write_trajectory(out / "trajectory.csv", rep.trajectory, sc.network.n_routes)
        write_equilibria(out / "equilibria.csv", [rep], sc.network.n_routes)
    return report_record(rep), rep.kind


def run_solve_dynamic(sc, args, out):
    if sc.mode != "dynamic":
        raise ValidationError(f"solve-dynamic needs a dynamic scenario, got mode {sc.mode!r}")
    cfg = sc.dyn_config(delta_tau=args.dtau, tol_J=args.tol, max_perturbations=args.max_perturb)
    split = args.init_split if args.init_split is not None else sc.dynamic.get("init_split", 0.5)
    seed = args.seed if args.seed is not None else (sc.seed or 0)
    g0 = random_profile(sc.network, seed) if split == "random" else split_profile(sc.network, split)
    rep = solve_dynamic(sc.network, g0, cfg)
    if out:
        write_convergence(out / "convergence.csv", rep.history)
        write_curves(out / "curves.csv", rep)
        write_travel_times(out / "travel_times.csv", rep, cfg.dt)
    record = dict(
        kind=str(rep.kind), norm_J=rep.norm_J, iterations=rep.iterations, n_perturbations=rep.n_perturbations,
        init_split=split, cumulative_at_T0=rep.cumulative_at(cfg.T0),
        witnesses=[dict(od=w.od, bin=w.bin, unused=w.unused + 1, used=w.used + 1) for w in rep.witnesses],
    )
    return record, rep.kind


def run_classify(sc, args, out):
    _static_mode(sc, args.command)
    if args.flows is not None:
        f = np.array(args.flows)
    elif "initial_flows" in sc.solver:
        f = np.array(sc.solver["initial_flows"])
    else:
        raise ValidationError("classify needs --flows or solver.initial_flows")
    cfg = sc.solver_config(tol_J=args.tol)
    kind, witnesses = classify(sc.network, f, cfg.zero_flow_eps, cost_rtol=cfg.cost_rtol,
                               tol_J=cfg.resolve_tol(sc.network))
    record = dict(kind=str(kind), flows=f,
                  witnesses=[dict(od=w.od, unused=w.unused + 1, used=w.used + 1) for w in witnesses])
    return record, kind


def run_enumerate(sc, args, out):
    _static_mode(sc, args.command)
    if sc.mode == "elastic":
        raise ValidationError("enumerate-equilibria works on fixed-demand scenarios")
    cfg = sc.solver_config(delta_tau=args.dtau, tol_J=args.tol)
    seed = args.seed if args.seed is not None else sc.seed
    res = enumerate_equilibria(sc.network, args.starts, seed, cfg)
    if out:
        write_equilibria(out / "equilibria.csv", res.equilibria, sc.network.n_routes, res.hits)
    record = dict(n_equilibria=len(res.equilibria), n_not_converged=res.n_not_converged,
                  equilibria=[dict(report_record(r), hits=h) for r, h in zip(res.equilibria, res.hits)])
    return record, Kind.UE if res.equilibria else Kind.NOT_CONVERGED


COMMANDS = {
    "solve-static": run_solve_static,
    "solve-elastic": run_solve_elastic,
    "solve-dynamic": run_solve_dynamic,
    "classify": run_classify,
    "enumerate-equilibria": run_enumerate,
}


def _error(exc: Exception, code: int) -> int:
    print(json.dumps(dict(error=type(exc).__name__, message=str(exc), exit_code=code)), file=sys.stderr)
    return code


def main(argv=None) -> int:
    level = os.environ.get("FIFO_TAP_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and 2
    start = time.perf_counter()
    try:
        sc = load_scenario(args.scenario)
        out = prepare_dir(args.out) if args.out else None
        record, kind = COMMANDS[args.command](sc, args, out)
        elapsed = time.perf_counter() - start
        if out:
            write_json(out / "result.json", dict(
                command=args.command, version=__version__, seed=args.seed if args.seed is not None else sc.seed,
                wall_time_s=elapsed, scenario=scenario_to_dict(sc), result=record,
            ))
    except FifoTapError as exc:
        return _error(exc, exc.exit_code)
    print(json.dumps(jsonable(dict(command=args.command, **record))))
    if kind is Kind.NOT_CONVERGED:
        logger.warning("no convergence within the iteration budget")
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
