"""JSON scenario files: parsing with field-path errors, and serialization.

Layout (``format_version`` 1)::

    {
      "format_version": 1,
      "mode": "static" | "elastic" | "dynamic",
      "network": {"nodes": [1, 2],
                  "links": [{"id": 1, "tail": 1, "head": 2, "free_flow_time": 10,
                             "capacity": 2, "alpha": 0.15, "beta": 4}]},
      "od": [{"origin": 1, "destination": 2, "demand": 10,
              "demand_function": {"a": 40, "b": 2}}],
      "routes": [{"od": 0, "links": [1]}],      # or "route_gen": {"k": 3}
      "solver": {"delta_tau": 0.0005, "tau_max": 1.0, "tol_J": null, "perturb_eps": 0.05,
                 "max_perturbations": 20, "seed": 0, "initial_flows": null},
      "dynamic": {"T0": 1, "T": 8, "N": 20, "M": 10, "delta_tau": 0.05,
                  "tau_max": 160, "tol_J": null, "init_split": 0.5}
    }

In dynamic mode links carry only ``free_flow_time`` and ``capacity`` and an
O-D ``demand`` is either one constant rate or a list of N per-bin rates.
``demand_function`` is required in elastic mode and ignored otherwise.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .dynamic import DynConfig, DynODPair, DynamicNetwork, PointQueueLink
from .elastic import LinearDemand
from .exceptions import ScenarioIOError, ValidationError
from .network import Link, Network, ODPair, Route
from .routes import k_shortest_routes
from .static import SolverConfig

FORMAT_VERSION = 1
MODES = ("static", "elastic", "dynamic")
SOLVER_KEYS = ("delta_tau", "tau_max", "tol_J", "perturb_eps", "max_perturbations", "seed", "initial_flows")
DYNAMIC_KEYS = ("T0", "T", "N", "M", "delta_tau", "tau_max", "tol_J", "max_perturbations", "init_split")


@dataclass
class Scenario:
    mode: str
    network: Network | DynamicNetwork
    nodes: tuple[int, ...]
    demand_fns: tuple[LinearDemand, ...] | None = None
    route_gen: int | None = None
    solver: dict[str, Any] = field(default_factory=dict)
    dynamic: dict[str, Any] = field(default_factory=dict)

    @property
    def seed(self) -> int | None:
        return self.solver.get("seed")

    def solver_config(self, **overrides) -> SolverConfig:
        kw = {k: v for k, v in self.solver.items() if k not in ("seed", "initial_flows")}
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return SolverConfig(**kw)

    def dyn_config(self, **overrides) -> DynConfig:
        kw = {k: v for k, v in self.dynamic.items() if k != "init_split"}
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return DynConfig(**kw)


class _Fields:
    """Typed access to one JSON object, with the object's path in every error."""

    def __init__(self, obj, path: str):
        if not isinstance(obj, dict):
            raise ValidationError(f"{path}: expected an object")
        self.obj = obj
        self.path = path

    def at(self, key):
        return f"{self.path}.{key}" if self.path else key

    def get(self, key, kind, default=..., allow_none=False):
        if key not in self.obj:
            if default is ...:
                raise ValidationError(f"{self.at(key)}: missing")
            return default
        value = self.obj[key]
        if value is None and allow_none:
            return None
        if kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        if kind is int and isinstance(value, int) and not isinstance(value, bool):
            return value
        if kind in (list, dict, str) and isinstance(value, kind):
            return value
        raise ValidationError(f"{self.at(key)}: expected {kind.__name__}, got {type(value).__name__}")

    def reject_unknown(self, allowed):
        extra = sorted(set(self.obj) - set(allowed))
        if extra:
            raise ValidationError(f"{self.path or 'scenario'}: unknown field(s) {extra}")


def _wrap(path: str, fn, *args, **kwargs):
    # re-raise constructor errors with the field path in front
    try:
        return fn(*args, **kwargs)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    except TypeError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def scenario_from_dict(data) -> Scenario:
    top = _Fields(data, "")
    top.reject_unknown(("format_version", "mode", "network", "od", "routes", "route_gen", "solver", "dynamic"))
    version = top.get("format_version", int)
    if version != FORMAT_VERSION:
        raise ValidationError(f"format_version: unsupported version {version}")
    mode = top.get("mode", str)
    if mode not in MODES:
        raise ValidationError(f"mode: expected one of {MODES}, got {mode!r}")
    dynamic = mode == "dynamic"

    net_f = _Fields(top.get("network", dict), "network")
    net_f.reject_unknown(("nodes", "links"))
    nodes = net_f.get("nodes", list)
    if not all(isinstance(n, int) and not isinstance(n, bool) for n in nodes):
        raise ValidationError("network.nodes: node ids must be integers")
    if len(set(nodes)) != len(nodes):
        raise ValidationError("network.nodes: duplicate node ids")
    node_set = set(nodes)

    links = []
    for i, raw in enumerate(net_f.get("links", list)):
        lf = _Fields(raw, f"network.links[{i}]")
        common = dict(id=lf.get("id", int), tail=lf.get("tail", int), head=lf.get("head", int),
                      free_flow_time=lf.get("free_flow_time", float), capacity=lf.get("capacity", float))
        for end in ("tail", "head"):
            if common[end] not in node_set:
                raise ValidationError(f"{lf.at(end)}: unknown node {common[end]}")
        if dynamic:
            lf.reject_unknown(common)
            links.append(_wrap(lf.path, PointQueueLink, **common))
        else:
            lf.reject_unknown((*common, "alpha", "beta"))
            extra = dict(alpha=lf.get("alpha", float, 0.15), beta=lf.get("beta", int, 4))
            links.append(_wrap(lf.path, Link, **common, **extra))

    dyn_raw = top.get("dynamic", dict, None)
    if dynamic and dyn_raw is None:
        raise ValidationError("dynamic: required in dynamic mode")
    dyn = {}
    if dyn_raw is not None:
        df = _Fields(dyn_raw, "dynamic")
        df.reject_unknown(DYNAMIC_KEYS)
        for key in DYNAMIC_KEYS:
            kind = int if key in ("N", "M", "max_perturbations") else float
            value = df.get(key, kind, None, allow_none=True)
            if value is not None:
                dyn[key] = value
        _wrap("dynamic", DynConfig, **{k: v for k, v in dyn.items() if k != "init_split"})
    n_bins = DynConfig(**{k: v for k, v in dyn.items() if k != "init_split"}).N if dynamic else None

    od_pairs, fns = [], []
    for i, raw in enumerate(top.get("od", list)):
        of = _Fields(raw, f"od[{i}]")
        of.reject_unknown(("origin", "destination", "demand", "demand_function"))
        origin, dest = of.get("origin", int), of.get("destination", int)
        for key, node in (("origin", origin), ("destination", dest)):
            if node not in node_set:
                raise ValidationError(f"{of.at(key)}: unknown node {node}")
        if dynamic:
            rates = of.obj.get("demand")
            if isinstance(rates, list):
                if len(rates) != n_bins:
                    raise ValidationError(f"{of.at('demand')}: expected {n_bins} per-bin rates, got {len(rates)}")
                if not all(isinstance(r, (int, float)) and not isinstance(r, bool) for r in rates):
                    raise ValidationError(f"{of.at('demand')}: rates must be numbers")
                rates = tuple(float(r) for r in rates)
            else:
                rates = (of.get("demand", float),) * n_bins
            od_pairs.append(_wrap(of.path, DynODPair, origin, dest, rates))
        else:
            od_pairs.append(_wrap(of.path, ODPair, origin, dest, of.get("demand", float)))
        fn_raw = of.get("demand_function", dict, None)
        if mode == "elastic":
            if fn_raw is None:
                raise ValidationError(f"{of.at('demand_function')}: required in elastic mode")
            ff = _Fields(fn_raw, of.at("demand_function"))
            ff.reject_unknown(("a", "b"))
            fns.append(_wrap(ff.path, LinearDemand, ff.get("a", float), ff.get("b", float, 0.0)))
    if not od_pairs:
        raise ValidationError("od: at least one O-D pair is required")

    has_routes, has_gen = "routes" in top.obj, "route_gen" in top.obj
    if has_routes == has_gen:
        raise ValidationError("scenario: exactly one of 'routes' and 'route_gen' is required")
    route_gen = None
    if has_routes:
        routes = []
        for i, raw in enumerate(top.get("routes", list)):
            rf = _Fields(raw, f"routes[{i}]")
            rf.reject_unknown(("od", "links"))
            ids = rf.get("links", list)
            if not all(isinstance(x, int) and not isinstance(x, bool) for x in ids):
                raise ValidationError(f"{rf.at('links')}: link ids must be integers")
            routes.append(_wrap(rf.path, Route, rf.get("od", int), tuple(ids)))
    else:
        gf = _Fields(top.get("route_gen", dict), "route_gen")
        gf.reject_unknown(("k",))
        route_gen = gf.get("k", int)
        routes = _wrap("route_gen", k_shortest_routes, links, od_pairs, route_gen)

    cls = DynamicNetwork if dynamic else Network
    network = _wrap("routes" if has_routes else "route_gen", cls, tuple(links), tuple(od_pairs), tuple(routes))

    solver = {}
    sf = _Fields(top.get("solver", dict, {}), "solver")
    sf.reject_unknown(SOLVER_KEYS)
    for key in SOLVER_KEYS:
        kind = {"max_perturbations": int, "seed": int, "initial_flows": list}.get(key, float)
        value = sf.get(key, kind, None, allow_none=True)
        if value is not None:
            solver[key] = value
    if "initial_flows" in solver:
        flows = solver["initial_flows"]
        if dynamic or len(flows) != network.n_routes or not all(isinstance(x, (int, float)) for x in flows):
            raise ValidationError(f"solver.initial_flows: expected {network.n_routes} numbers (static modes only)")
        solver["initial_flows"] = [float(x) for x in flows]
    _wrap("solver", SolverConfig, **{k: v for k, v in solver.items() if k not in ("seed", "initial_flows")})

    return Scenario(mode, network, tuple(nodes), tuple(fns) if mode == "elastic" else None,
                    route_gen, solver, dyn)


def scenario_to_dict(sc: Scenario) -> dict:
    net = sc.network
    dynamic = sc.mode == "dynamic"
    links = []
    for link in net.links:
        row = dict(id=link.id, tail=link.tail, head=link.head,
                   free_flow_time=link.free_flow_time, capacity=link.capacity)
        if not dynamic:
            row.update(alpha=link.alpha, beta=link.beta)
        links.append(row)
    ods = []
    for i, od in enumerate(net.od_pairs):
        row = dict(origin=od.origin, destination=od.destination)
        if dynamic:
            rates = list(od.rates)
            row["demand"] = rates[0] if len(set(rates)) == 1 else rates
        else:
            row["demand"] = od.demand
        if sc.demand_fns is not None:
            row["demand_function"] = dict(a=sc.demand_fns[i].a, b=sc.demand_fns[i].b)
        ods.append(row)
    out = dict(format_version=FORMAT_VERSION, mode=sc.mode,
               network=dict(nodes=list(sc.nodes), links=links), od=ods)
    if sc.route_gen is not None:
        out["route_gen"] = dict(k=sc.route_gen)
    else:
        out["routes"] = [dict(od=r.od, links=list(r.links)) for r in net.routes]
    if sc.solver:
        out["solver"] = dict(sc.solver)
    if sc.dynamic:
        out["dynamic"] = dict(sc.dynamic)
    return out


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioIOError(f"{path}: {exc.strerror or exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return scenario_from_dict(data)


def save_scenario(sc: Scenario, path) -> None:
    try:
        Path(path).write_text(json.dumps(scenario_to_dict(sc), indent=2) + "\n")
    except OSError as exc:
        raise ScenarioIOError(f"{path}: {exc.strerror or exc}") from None


def bundled(name: str) -> Path:
    """Path of a scenario shipped with the package, e.g. ``bundled('sheffi3.json')``."""
    from importlib.resources import files

    return Path(str(files("fifo_tap") / "data" / name))
