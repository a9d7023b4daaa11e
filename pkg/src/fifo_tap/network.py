"""Network representation and the static flow algebra.

Route flows are kept as one flat vector ordered by O-D pair and then by the
route order given for that pair; ``Network.route_od`` maps each position to
its O-D index.  Link travel times follow the power law

    t_a(x) = t0 * (1 + alpha * (x / capacity) ** beta)
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .exceptions import InfeasibleFlowError, ValidationError


@dataclass(frozen=True)
class Link:
    id: int
    tail: int
    head: int
    free_flow_time: float
    capacity: float
    alpha: float = 0.15
    beta: int = 4

    def __post_init__(self):
        if not self.free_flow_time > 0:
            raise ValidationError(f"link {self.id}: free_flow_time must be > 0")
        if not self.capacity > 0:
            raise ValidationError(f"link {self.id}: capacity must be > 0")
        if not self.alpha >= 0:
            raise ValidationError(f"link {self.id}: alpha must be >= 0")
        if int(self.beta) != self.beta or self.beta < 1:
            raise ValidationError(f"link {self.id}: beta must be a positive integer")

    def travel_time(self, x):
        return self.free_flow_time * (1.0 + self.alpha * (np.asarray(x) / self.capacity) ** self.beta)


@dataclass(frozen=True)
class ODPair:
    origin: int
    destination: int
    demand: float

    def __post_init__(self):
        if not self.demand >= 0:
            raise ValidationError(f"O-D ({self.origin}, {self.destination}): demand must be >= 0")


@dataclass(frozen=True)
class Route:
    od: int
    links: tuple[int, ...]

    def __post_init__(self):
        if len(self.links) == 0:
            raise ValidationError("route has no links")


@dataclass(frozen=True)
class Network:
    """Links, O-D pairs and an explicit route set.

    ``routes`` is flat; ``Route.od`` indexes into ``od_pairs``.  Routes are
    stored grouped by O-D pair (the constructor sorts them stably).
    """

    links: tuple[Link, ...]
    od_pairs: tuple[ODPair, ...]
    routes: tuple[Route, ...]

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(self.links))
        object.__setattr__(self, "od_pairs", tuple(self.od_pairs))
        routes = sorted(self.routes, key=lambda r: r.od)
        object.__setattr__(self, "routes", tuple(routes))
        self._validate()

    def _validate(self):
        validate_routes(self.links, self.od_pairs, self.routes)

    @property
    def n_links(self) -> int:
        return len(self.links)

    @property
    def n_routes(self) -> int:
        return len(self.routes)

    @property
    def n_od(self) -> int:
        return len(self.od_pairs)

    @cached_property
    def link_index(self) -> dict[int, int]:
        return {link.id: i for i, link in enumerate(self.links)}

    @cached_property
    def incidence(self) -> np.ndarray:
        """Link-route indicator matrix, shape (n_links, n_routes)."""
        delta = np.zeros((self.n_links, self.n_routes))
        for k, r in enumerate(self.routes):
            for lid in r.links:
                delta[self.link_index[lid], k] += 1.0
        return delta

    @cached_property
    def route_od(self) -> np.ndarray:
        return np.array([r.od for r in self.routes], dtype=int)

    @cached_property
    def demand(self) -> np.ndarray:
        return np.array([od.demand for od in self.od_pairs], dtype=float)

    @cached_property
    def od_slices(self) -> list[slice]:
        bounds = np.searchsorted(self.route_od, np.arange(self.n_od + 1))
        return [slice(int(bounds[i]), int(bounds[i + 1])) for i in range(self.n_od)]

    @cached_property
    def _t0(self) -> np.ndarray:
        return np.array([link.free_flow_time for link in self.links])

    @cached_property
    def _cap(self) -> np.ndarray:
        return np.array([link.capacity for link in self.links])

    @cached_property
    def _alpha(self) -> np.ndarray:
        return np.array([link.alpha for link in self.links])

    @cached_property
    def _beta(self) -> np.ndarray:
        return np.array([link.beta for link in self.links], dtype=float)

    def od_sum(self, values) -> np.ndarray:
        """Sum a per-route vector within each O-D pair."""
        return np.bincount(self.route_od, weights=values, minlength=self.n_od)

    def with_demand(self, demand: Sequence[float]) -> "Network":
        ods = tuple(ODPair(od.origin, od.destination, float(q)) for od, q in zip(self.od_pairs, demand))
        return Network(self.links, ods, self.routes)


def validate_routes(links, od_pairs, routes) -> None:
    """Check link ids, route adjacency, and that every O-D pair has a route.

    ``links`` need ``id``, ``tail`` and ``head``; ``od_pairs`` need
    ``origin`` and ``destination``.
    """
    ids = [link.id for link in links]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate link ids")
    by_id = {link.id: link for link in links}
    counts = np.zeros(len(od_pairs), dtype=int)
    for r in routes:
        if not 0 <= r.od < len(od_pairs):
            raise ValidationError(f"route refers to unknown O-D index {r.od}")
        od = od_pairs[r.od]
        node = od.origin
        for lid in r.links:
            if lid not in by_id:
                raise ValidationError(f"route refers to unknown link {lid}")
            link = by_id[lid]
            if link.tail != node:
                raise ValidationError(f"route {r.links}: link {lid} does not start at node {node}")
            node = link.head
        if node != od.destination:
            raise ValidationError(f"route {r.links} does not end at destination {od.destination}")
        counts[r.od] += 1
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        raise ValidationError(f"O-D pairs without routes: {missing.tolist()}")


def check_route_flows(net: Network, f, demand=None, rtol: float = 1e-9) -> np.ndarray:
    """Validate a route-flow vector and return it as a float array."""
    f = np.asarray(f, dtype=float)
    if f.shape != (net.n_routes,):
        raise InfeasibleFlowError(f"expected {net.n_routes} route flows, got shape {f.shape}")
    if not np.all(np.isfinite(f)):
        raise InfeasibleFlowError("route flows must be finite")
    if np.any(f < 0):
        raise InfeasibleFlowError("route flows must be non-negative")
    q = net.demand if demand is None else np.asarray(demand, dtype=float)
    totals = net.od_sum(f)
    bad = np.abs(totals - q) > rtol * np.maximum(q, 1.0)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise InfeasibleFlowError(f"O-D {i}: route flows sum to {totals[i]!r}, demand is {q[i]!r}")
    return f


def aggregate_link_flows(net: Network, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (net.n_routes,):
        raise ValidationError(f"expected {net.n_routes} route flows, got shape {f.shape}")
    return net.incidence @ f


def link_travel_times(net: Network, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (net.n_links,):
        raise ValidationError(f"expected {net.n_links} link flows, got shape {x.shape}")
    if np.any(x < 0):
        raise ValidationError("link flows must be non-negative")
    return net._t0 * (1.0 + net._alpha * (x / net._cap) ** net._beta)


def route_costs(net: Network, t) -> np.ndarray:
    return net.incidence.T @ np.asarray(t, dtype=float)


def average_od_time(net: Network, f, c, demand=None) -> np.ndarray:
    """Flow-weighted mean route cost per O-D pair.

    Raises ``ValidationError`` for O-D pairs with zero demand; callers skip
    those pairs (see ``Network.demand``).
    """
    q = net.demand if demand is None else np.asarray(demand, dtype=float)
    if np.any(q <= 0):
        raise ValidationError("average O-D time is undefined for zero demand")
    return net.od_sum(np.asarray(f) * np.asarray(c)) / q


def bmw_objective(net: Network, x) -> float:
    """Sum over links of the integral of t_a from 0 to x_a (closed form)."""
    x = np.asarray(x, dtype=float)
    b = net._beta
    integral = net._t0 * (x + net._alpha * x ** (b + 1) / ((b + 1) * net._cap**b))
    return float(integral.sum())


def bmw_gradient(net: Network, f) -> np.ndarray:
    """Partial derivatives of the objective in route flows; these are the route costs."""
    return route_costs(net, link_travel_times(net, aggregate_link_flows(net, f)))


@dataclass
class AssignmentSnapshot:
    x: np.ndarray
    t: np.ndarray
    c: np.ndarray
    v: np.ndarray
    J: np.ndarray
    z: float
    f: np.ndarray = field(repr=False)


def snapshot(net: Network, f, demand=None) -> AssignmentSnapshot:
    """Evaluate every derived quantity of a route-flow state.

    O-D pairs with zero demand get ``v = nan`` and ``J = 0``.  J is evaluated
    as ``f_k * (s * c_k - sum_j f_j c_j)`` with ``s`` the current O-D total;
    on feasible states this equals ``q * f_k * (c_k - v)``, and unlike that
    form its O-D sums vanish regardless of roundoff in ``s``.
    """
    f = np.asarray(f, dtype=float)
    q = net.demand if demand is None else np.asarray(demand, dtype=float)
    x = aggregate_link_flows(net, f)
    t = link_travel_times(net, x)
    c = route_costs(net, t)
    fc = net.od_sum(f * c)
    with np.errstate(invalid="ignore", divide="ignore"):
        v = np.where(q > 0, fc / np.where(q > 0, q, 1.0), np.nan)
    s = net.od_sum(f)[net.route_od]
    J = np.where(q[net.route_od] > 0, f * (s * c - fc[net.route_od]), 0.0)
    return AssignmentSnapshot(x=x, t=t, c=c, v=v, J=J, z=bmw_objective(net, x), f=f)


def parallel_links(t0: Sequence[float], capacity: Sequence[float], demand: float,
                   alpha: float = 0.15, beta: int = 4) -> Network:
    """One O-D pair (1 -> 2) joined by parallel single-link routes."""
    links = tuple(
        Link(i + 1, 1, 2, float(a), float(b), alpha, beta) for i, (a, b) in enumerate(zip(t0, capacity))
    )
    routes = tuple(Route(0, (link.id,)) for link in links)
    return Network(links, (ODPair(1, 2, float(demand)),), routes)
