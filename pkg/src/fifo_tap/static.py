"""Route-flow dynamics for fixed demand.

Flows evolve as ``df/dtau = -J(f)`` with the FIFO violation
``J_k = q * f_k * (c_k - v)``.  The integrator is forward Euler with a
per-step safeguard: the step is halved while the update would make a flow
negative or raise the objective.  Both conditions leave O-D totals intact
because J sums to zero within every O-D pair.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import FifoTapError, NotAnEquilibriumError, StepUnderflowError, ValidationError
from .network import Network, check_route_flows, snapshot

logger = logging.getLogger(__name__)


class Kind(str, enum.Enum):
    UE = "UE"
    PUE = "PUE"
    NOT_CONVERGED = "NotConverged"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class Witness:
    """An unused route that is shorter than a used route of the same O-D pair."""

    od: int
    unused: int
    used: int


@dataclass
class SolverConfig:
    delta_tau: float = 5e-4
    tau_max: float = 1.0
    tol_J: float | None = None
    zero_flow_eps: float = 1e-8
    cost_rtol: float = 1e-6
    perturb_eps: float = 0.05
    max_perturbations: int = 20
    min_step_fraction: float = 1e-6
    z_slack: float = 1e-9
    max_samples: int = 1000

    def __post_init__(self):
        if not self.delta_tau > 0:
            raise ValidationError("delta_tau must be > 0")
        if not self.tau_max > 0:
            raise ValidationError("tau_max must be > 0")
        if self.tol_J is not None and not self.tol_J > 0:
            raise ValidationError("tol_J must be > 0")
        if not self.perturb_eps > 0:
            raise ValidationError("perturb_eps must be > 0")
        if self.max_perturbations < 0:
            raise ValidationError("max_perturbations must be >= 0")

    def resolve_tol(self, net: Network, demand=None) -> float:
        """The explicit tolerance, or 1e-6 * (total demand)^2 * mean free-flow time."""
        if self.tol_J is not None:
            return float(self.tol_J)
        q = net.demand if demand is None else np.asarray(demand)
        t0 = np.mean([link.free_flow_time for link in net.links])
        return max(1e-6 * float(np.sum(q)) ** 2 * float(t0), 1e-12)


@dataclass
class Trajectory:
    tau: list = field(default_factory=list)
    flows: list = field(default_factory=list)
    z: list = field(default_factory=list)
    norm_J: list = field(default_factory=list)
    rate: list = field(default_factory=list)
    demand: list = field(default_factory=list)

    def append(self, tau, f, z, norm, rate, q=None):
        self.tau.append(float(tau))
        self.flows.append(np.array(f, dtype=float))
        self.z.append(float(z))
        self.norm_J.append(float(norm))
        self.rate.append(float(rate))
        if q is not None:
            self.demand.append(np.array(q, dtype=float))

    def extend(self, other: "Trajectory", tau_offset: float = 0.0):
        self.tau.extend(t + tau_offset for t in other.tau)
        self.flows.extend(other.flows)
        self.z.extend(other.z)
        self.norm_J.extend(other.norm_J)
        self.rate.extend(other.rate)
        self.demand.extend(other.demand)

    def __len__(self):
        return len(self.tau)


@dataclass
class EquilibriumReport:
    flows: np.ndarray
    kind: Kind
    witnesses: list[Witness]
    norm_J: float
    costs: np.ndarray
    tau: float = 0.0
    steps: int = 0
    n_perturbations: int = 0
    trajectory: Trajectory | None = None
    demand: np.ndarray | None = None
    stages: list["EquilibriumReport"] = field(default_factory=list, repr=False)

    @property
    def converged(self) -> bool:
        return self.kind is not Kind.NOT_CONVERGED


def fifo_violation(net: Network, f, demand=None) -> np.ndarray:
    """J_k = q * f_k * (c_k - v) for every route; zero on O-D pairs with no demand."""
    f = check_route_flows(net, f, demand)
    return snapshot(net, f, demand).J


def fifo_violation_pairwise(net: Network, f, c) -> np.ndarray:
    """The same quantity written as f_k * sum_j f_j (c_k - c_j)."""
    f = np.asarray(f, dtype=float)
    c = np.asarray(c, dtype=float)
    out = np.zeros_like(f)
    for sl in net.od_slices:
        fk, ck = f[sl], c[sl]
        out[sl] = fk * ((ck[:, None] - ck[None, :]) @ fk)
    return out


def lyapunov_rate(net: Network, f, c) -> float:
    """Time derivative of the objective along the flow: -sum_{k<j} (c_k - c_j)^2 f_k f_j."""
    f = np.asarray(f, dtype=float)
    c = np.asarray(c, dtype=float)
    total = 0.0
    for sl in net.od_slices:
        fk, ck = f[sl], c[sl]
        d2 = (ck[:, None] - ck[None, :]) ** 2 * np.outer(fk, fk)
        total += np.triu(d2, 1).sum()
    return -float(total)


def initially_used(net: Network, f) -> np.ndarray:
    """Number of routes with positive flow, per O-D pair."""
    return np.bincount(net.route_od, weights=(np.asarray(f) > 0).astype(float), minlength=net.n_od)


def convergence_index(J, K_per_od) -> float:
    """Root-mean-square FIFO violation over the initially used routes."""
    K = float(np.sum(K_per_od))
    if K <= 0:
        raise ValidationError("no initially used routes")
    return math.sqrt(float(np.sum(np.square(J))) / K)


def _halving_update(f, rate, delta_tau, min_fraction, accept=None):
    """Apply f + dt * rate, halving dt until the result is admissible.

    Returns the new state, the step taken and, when ``accept`` is given,
    whatever ``accept`` returned for the accepted state.
    """
    dt = delta_tau
    floor = delta_tau * min_fraction
    while dt >= floor:
        trial = f + dt * rate
        if np.all(trial >= 0):
            if accept is None:
                return trial, dt, None
            ok, payload = accept(trial)
            if ok:
                return trial, dt, payload
        dt *= 0.5
    raise StepUnderflowError(
        f"decision step fell below {floor:g} without an admissible update; "
        "the state is pinned against the boundary or delta_tau is too large"
    )


def euler_step(net: Network, f, delta_tau: float, demand=None, min_fraction: float = 1e-6) -> np.ndarray:
    """One forward-Euler update f - dt * J(f), halving dt to keep f >= 0."""
    if not delta_tau > 0:
        raise ValidationError("delta_tau must be > 0")
    f = check_route_flows(net, f, demand)
    J = snapshot(net, f, demand).J
    new, _, _ = _halving_update(f, -J, delta_tau, min_fraction)
    return new


def _sample_every(cfg: SolverConfig) -> int:
    total = int(math.ceil(cfg.tau_max / cfg.delta_tau))
    return max(1, total // cfg.max_samples)


def solve_equilibrium(net: Network, f0, cfg: SolverConfig | None = None, *,
                      record: bool = True) -> EquilibriumReport:
    """Integrate the route-flow dynamics from ``f0`` until ||J|| <= tol or tau_max.

    The returned report is classified (UE or PUE) when the tolerance was
    met, and marked ``NotConverged`` otherwise.
    """
    cfg = cfg or SolverConfig()
    f = check_route_flows(net, f0)
    K = initially_used(net, f)
    tol = cfg.resolve_tol(net)
    every = _sample_every(cfg)
    traj = Trajectory() if record else None

    snap = snapshot(net, f)
    norm = convergence_index(snap.J, K)
    tau, steps = 0.0, 0
    if traj is not None:
        traj.append(tau, f, snap.z, norm, lyapunov_rate(net, f, snap.c))

    def accept(trial, z_ref):
        s = snapshot(net, trial)
        return s.z <= z_ref + cfg.z_slack, s

    max_steps = 100 * int(math.ceil(cfg.tau_max / cfg.delta_tau))
    while norm > tol and tau < cfg.tau_max * (1 - 1e-12) and steps < max_steps:
        dt = min(cfg.delta_tau, cfg.tau_max - tau)
        try:
            f, taken, snap = _halving_update(
                f, -snap.J, dt, cfg.min_step_fraction, lambda tr, z=snap.z: accept(tr, z)
            )
        except StepUnderflowError as exc:
            raise StepUnderflowError(f"{exc} (objective could not be decreased; reduce delta_tau)") from None
        if taken < dt:
            logger.debug("step halved to %g at tau=%g", taken, tau)
        tau += taken
        steps += 1
        norm = convergence_index(snap.J, K)
        if traj is not None and (steps % every == 0 or norm <= tol):
            traj.append(tau, f, snap.z, norm, lyapunov_rate(net, f, snap.c))

    if norm <= tol:
        kind, witnesses = classify(net, f, cfg.zero_flow_eps, cost_rtol=cfg.cost_rtol, tol_J=tol)
    else:
        kind, witnesses = Kind.NOT_CONVERGED, []
        logger.info("not converged: ||J||=%g > %g at tau=%g", norm, tol, tau)
    return EquilibriumReport(
        flows=f, kind=kind, witnesses=witnesses, norm_J=norm, costs=snap.c,
        tau=tau, steps=steps, trajectory=traj,
    )


def classify(net: Network, f, zero_flow_eps: float = 1e-8, *, cost_rtol: float = 1e-6,
             tol_J: float | None = None, demand=None) -> tuple[Kind, list[Witness]]:
    """Label an equilibrium as UE or PUE.

    A route is unused when its flow is below ``zero_flow_eps * q``.  It is a
    witness when its cost is below the average cost of the used routes by
    more than ``cost_rtol * v``.  Each witness is paired with the used route
    carrying the most flow.
    """
    q = net.demand if demand is None else np.asarray(demand, dtype=float)
    f = check_route_flows(net, f, q)
    snap = snapshot(net, f, q)
    if tol_J is None:
        tol_J = SolverConfig().resolve_tol(net, q)
    K = initially_used(net, f)
    norm = convergence_index(snap.J, K) if K.sum() > 0 else 0.0
    if norm > tol_J:
        raise NotAnEquilibriumError(f"state is not an equilibrium: ||J||={norm:g} > {tol_J:g}")
    witnesses = []
    for i, sl in enumerate(net.od_slices):
        if q[i] <= 0:
            continue
        fk, ck = f[sl], snap.c[sl]
        used = fk >= zero_flow_eps * q[i]
        v = snap.v[i]
        donor = sl.start + int(np.argmax(fk))
        for k in np.flatnonzero(~used):
            if ck[k] < v - cost_rtol * abs(v):
                witnesses.append(Witness(i, sl.start + int(k), donor))
    return (Kind.PUE if witnesses else Kind.UE), witnesses


def perturb(net: Network, f, witnesses, perturb_eps: float = 0.05, floor: float = 1e-6) -> np.ndarray:
    """Shift ``perturb_eps`` from the largest used route to each unused shorter route.

    If the donor cannot cover every shift, the amount is halved until it can.
    """
    f = np.array(f, dtype=float)
    by_od: dict[int, list[int]] = {}
    for w in witnesses:
        by_od.setdefault(w.od, [])
        if w.unused not in by_od[w.od]:
            by_od[w.od].append(w.unused)
    for od, targets in by_od.items():
        sl = net.od_slices[od]
        donor = sl.start + int(np.argmax(f[sl]))
        eps = perturb_eps
        while eps * len(targets) >= f[donor]:
            eps *= 0.5
            if eps < floor:
                raise FifoTapError(f"O-D {od}: donor flow {f[donor]:g} too small to perturb")
        for k in targets:
            f[k] += eps
        f[donor] -= eps * len(targets)
    return f


def find_ue(net: Network, f0, cfg: SolverConfig | None = None) -> EquilibriumReport:
    """Alternate integration and perturbation until no unused route is shorter."""
    cfg = cfg or SolverConfig()
    report = solve_equilibrium(net, f0, cfg)
    stages = [report]
    n = 0
    while report.kind is Kind.PUE and n < cfg.max_perturbations:
        logger.info("PUE with %d witness(es); perturbing", len(report.witnesses))
        f = perturb(net, report.flows, report.witnesses, cfg.perturb_eps)
        report = solve_equilibrium(net, f, cfg)
        stages.append(report)
        n += 1
    if report.kind is Kind.PUE:
        logger.warning("perturbation limit (%d) reached at a PUE", cfg.max_perturbations)

    traj = Trajectory()
    offset = 0.0
    for stage in stages:
        if stage.trajectory is not None:
            traj.extend(stage.trajectory, offset)
        offset += stage.tau
    return replace(
        report, n_perturbations=n, trajectory=traj, tau=offset,
        steps=sum(s.steps for s in stages), stages=stages,
    )
