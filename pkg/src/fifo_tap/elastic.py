"""Elastic (variable) demand.

Each O-D pair has a decreasing inverse demand u(q).  Route flows follow

    df_k/dtau = -q * f_k * (c_k - u(q))

and the demand follows the sum of its routes, dq/dtau = -q * (sum_k f_k c_k - q u(q)).
The integrator carries route flows only and reads q as their O-D total, so
the constraint sum_k f_k = q cannot drift.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .exceptions import InfeasibleFlowError, ValidationError
from .network import Network, bmw_objective, snapshot
from .static import (
    EquilibriumReport,
    Kind,
    SolverConfig,
    Trajectory,
    Witness,
    _halving_update,
    _sample_every,
    convergence_index,
    find_ue,
    perturb,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LinearDemand:
    """u(q) = max(a - b q, 0)."""

    a: float
    b: float = 0.0

    def __post_init__(self):
        if not self.a > 0:
            raise ValidationError("demand function: a must be > 0")
        if not self.b >= 0:
            raise ValidationError("demand function: b must be >= 0")

    def __call__(self, q):
        return np.maximum(self.a - self.b * np.asarray(q, dtype=float), 0.0)

    def integral(self, q):
        q = np.asarray(q, dtype=float)
        if self.b == 0:
            return self.a * q
        q_stop = self.a / self.b
        inside = self.a * q - 0.5 * self.b * q**2
        return np.where(q <= q_stop, inside, 0.5 * self.a * q_stop)


@dataclass
class ElasticState:
    f: np.ndarray
    q: np.ndarray = field(default=None)

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=float)


def _check_state(net: Network, state: ElasticState) -> tuple[np.ndarray, np.ndarray]:
    f = state.f
    if f.shape != (net.n_routes,):
        raise InfeasibleFlowError(f"expected {net.n_routes} route flows, got shape {f.shape}")
    if np.any(f < 0) or not np.all(np.isfinite(f)):
        raise InfeasibleFlowError("route flows must be finite and non-negative")
    totals = net.od_sum(f)
    if state.q is None:
        return f, totals
    q = np.asarray(state.q, dtype=float)
    if np.any(q < 0):
        raise InfeasibleFlowError("demand must be non-negative")
    if np.any(np.abs(totals - q) > 1e-9 * np.maximum(q, 1.0)):
        raise InfeasibleFlowError("route flows do not sum to the O-D demand")
    return f, q


def _u(demand_fns, q):
    return np.array([float(fn(qi)) for fn, qi in zip(demand_fns, q)])


def elastic_rates(net: Network, state: ElasticState, demand_fns) -> tuple[np.ndarray, np.ndarray]:
    """Route and demand rates in the direct form (route term uses u)."""
    f, q = _check_state(net, state)
    c = snapshot(net, f, q).c
    u = _u(demand_fns, q)
    qk = q[net.route_od]
    df = -qk * f * (c - u[net.route_od])
    dq = -q * (net.od_sum(f * c) - q * u)
    return df, dq


def elastic_rates_split(net: Network, state: ElasticState, demand_fns) -> tuple[np.ndarray, np.ndarray]:
    """The same rates split into the within-O-D violation and a q (v - u) term."""
    f, q = _check_state(net, state)
    s = snapshot(net, f, q)
    u = _u(demand_fns, q)
    v = np.where(q > 0, s.v, 0.0)
    qk = q[net.route_od]
    within = f * ((s.c - v[net.route_od]) * qk)
    df = -within - qk * f * (v - u)[net.route_od]
    dq = -q**2 * (v - u)
    return df, dq


def elastic_objective(net: Network, f, demand_fns) -> float:
    """Link-cost integrals minus the area under each inverse demand curve."""
    f = np.asarray(f, dtype=float)
    q = net.od_sum(f)
    x = net.incidence @ f
    return bmw_objective(net, x) - float(sum(fn.integral(qi) for fn, qi in zip(demand_fns, q)))


def elastic_lyapunov_rate(net: Network, f, c, demand_fns) -> float:
    """d(objective)/dtau along the flow: -sum_rs q sum_k f_k (c_k - u)^2."""
    f = np.asarray(f, dtype=float)
    q = net.od_sum(f)
    u = _u(demand_fns, q)
    return -float(np.sum(q[net.route_od] * f * (np.asarray(c) - u[net.route_od]) ** 2))


def _violation(net, f, c, u):
    q = net.od_sum(f)
    return q[net.route_od] * f * (c - u[net.route_od])


def classify_elastic(net: Network, f, demand_fns, zero_flow_eps: float = 1e-8,
                     cost_rtol: float = 1e-6) -> tuple[Kind, list[Witness]]:
    """UE unless some unused route is cheaper than u(q) of its O-D pair."""
    f = np.asarray(f, dtype=float)
    q = net.od_sum(f)
    c = snapshot(net, f, q).c
    u = _u(demand_fns, q)
    witnesses = []
    for i, sl in enumerate(net.od_slices):
        if q[i] <= 0:
            if c[sl].min() < u[i]:
                logger.warning("O-D %d has zero demand below its willingness to travel; q = 0 is absorbing", i)
            continue
        fk = f[sl]
        donor = sl.start + int(np.argmax(fk))
        for k in np.flatnonzero(fk < zero_flow_eps * q[i]):
            if c[sl][k] < u[i] - cost_rtol * abs(u[i]):
                witnesses.append(Witness(i, sl.start + int(k), donor))
    return (Kind.PUE if witnesses else Kind.UE), witnesses


def _check_fns(net, demand_fns):
    demand_fns = list(demand_fns)
    if len(demand_fns) != net.n_od:
        raise ValidationError(f"need one demand function per O-D pair ({net.n_od}), got {len(demand_fns)}")
    return demand_fns


def _integrate(net, f, demand_fns, cfg, tol):
    K = (net.od_sum((f > 0).astype(float)))
    every = _sample_every(cfg)
    traj = Trajectory()

    def evaluate(g):
        c = snapshot(net, g, net.od_sum(g)).c
        u = _u(demand_fns, net.od_sum(g))
        return c, _violation(net, g, c, u), elastic_objective(net, g, demand_fns)

    c, E, z = evaluate(f)
    norm = convergence_index(E, K)
    traj.append(0.0, f, z, norm, elastic_lyapunov_rate(net, f, c, demand_fns), net.od_sum(f))
    tau, steps = 0.0, 0
    max_steps = 100 * int(math.ceil(cfg.tau_max / cfg.delta_tau))

    def accept(trial, z_ref):
        res = evaluate(trial)
        return res[2] <= z_ref + cfg.z_slack, res

    while norm > tol and tau < cfg.tau_max * (1 - 1e-12) and steps < max_steps:
        dt = min(cfg.delta_tau, cfg.tau_max - tau)
        f, taken, (c, E, z) = _halving_update(f, -E, dt, cfg.min_step_fraction, lambda t, zr=z: accept(t, zr))
        tau += taken
        steps += 1
        norm = convergence_index(E, K)
        if steps % every == 0 or norm <= tol:
            traj.append(tau, f, z, norm, elastic_lyapunov_rate(net, f, c, demand_fns), net.od_sum(f))
    return f, c, norm, tau, steps, traj


def solve_elastic(net: Network, demand_fns: Sequence, f0, cfg: SolverConfig | None = None) -> EquilibriumReport:
    """Integrate route flows and demands together, perturbing out of PUE.

    ``f0`` fixes the initial demand through its O-D totals.
    """
    cfg = cfg or SolverConfig()
    demand_fns = _check_fns(net, demand_fns)
    f, q0 = _check_state(net, ElasticState(np.array(f0, dtype=float)))
    tol = cfg.resolve_tol(net, q0)
    stages = []
    traj = Trajectory()
    offset, total_steps, n_pert = 0.0, 0, 0
    while True:
        f, c, norm, tau, steps, part = _integrate(net, f, demand_fns, cfg, tol)
        traj.extend(part, offset)
        offset += tau
        total_steps += steps
        if norm > tol:
            kind, witnesses = Kind.NOT_CONVERGED, []
        else:
            kind, witnesses = classify_elastic(net, f, demand_fns, cfg.zero_flow_eps, cfg.cost_rtol)
        stages.append(kind)
        if kind is not Kind.PUE or n_pert >= cfg.max_perturbations:
            break
        f = perturb(net, f, witnesses, cfg.perturb_eps)
        n_pert += 1
    return EquilibriumReport(
        flows=f, kind=kind, witnesses=witnesses, norm_J=norm, costs=c, tau=offset,
        steps=total_steps, n_perturbations=n_pert, trajectory=traj, demand=net.od_sum(f),
    )


def solve_elastic_nested(net: Network, demand_fns: Sequence, q0, cfg: SolverConfig | None = None, *,
                         outer_step: float | None = None, max_outer: int = 10000,
                         f0=None) -> EquilibriumReport:
    """Fixed-demand UE inside, Euler on dq/dtau = -q^2 (v - u) outside.

    After each demand update the inner UE is rescaled by q_new / q, which is
    what the route equation gives when every used route costs v.
    """
    cfg = cfg or SolverConfig()
    demand_fns = _check_fns(net, demand_fns)
    q = np.asarray(q0, dtype=float).copy()
    if q.shape != (net.n_od,) or np.any(q <= 0):
        raise ValidationError("initial demand must be positive for every O-D pair")
    step = cfg.delta_tau if outer_step is None else outer_step
    tol = cfg.resolve_tol(net, q)
    if f0 is None:
        sizes = np.bincount(net.route_od, minlength=net.n_od)
        f = (q / sizes)[net.route_od]
    else:
        f = np.asarray(f0, dtype=float)
    traj = Trajectory()
    tau = 0.0
    for outer in range(max_outer):
        inner = find_ue(net.with_demand(q), f, cfg)
        if inner.kind is Kind.NOT_CONVERGED:
            logger.info("inner solve did not converge at q=%s", q)
            return replace(inner, demand=q, tau=tau, steps=outer)
        f = inner.flows
        s = snapshot(net, f, q)
        u = _u(demand_fns, q)
        rate = -(q**2) * (s.v - u)
        traj.append(tau, f, elastic_objective(net, f, demand_fns), float(np.abs(rate).max()),
                    elastic_lyapunov_rate(net, f, s.c, demand_fns), q)
        if np.abs(rate).max() <= tol:
            kind, witnesses = classify_elastic(net, f, demand_fns, cfg.zero_flow_eps, cfg.cost_rtol)
            return EquilibriumReport(
                flows=f, kind=kind, witnesses=witnesses, norm_J=float(np.abs(rate).max()), costs=s.c,
                tau=tau, steps=outer, trajectory=traj, demand=q.copy(),
            )
        new_q, taken, _ = _halving_update(q, rate, step, cfg.min_step_fraction)
        new_q = np.maximum(new_q, 0.0)
        f = f * (new_q / np.where(q > 0, q, 1.0))[net.route_od]
        q = new_q
        tau += taken
    s = snapshot(net, f, q)
    return EquilibriumReport(
        flows=f, kind=Kind.NOT_CONVERGED, witnesses=[], norm_J=float(np.abs(q**2 * (s.v - _u(demand_fns, q))).max()),
        costs=s.c, tau=tau, steps=max_outer, trajectory=traj, demand=q,
    )
