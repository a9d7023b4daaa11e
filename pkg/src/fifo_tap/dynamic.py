"""Time-dependent assignment with point-queue network loading.

Departure rates g are piecewise constant over N assignment bins of width
dt = T0 / N and evolve as dg/dtau = -J, bin by bin.  Each decision
iteration loads every route on a simulation grid with step h = dt / M,
reads route travel times off the cumulative curves, and takes one Euler
step.

Arrays are laid out as ``g[route, bin]`` and ``curve[route, instant]``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .exceptions import HorizonError, StepUnderflowError, ValidationError
from .network import Route, validate_routes
from .static import Kind

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PointQueueLink:
    """Constant free-flow time with a capacity-bounded exit; the queue is vertical."""

    id: int
    tail: int
    head: int
    free_flow_time: float
    capacity: float

    def __post_init__(self):
        if not self.free_flow_time > 0:
            raise ValidationError(f"link {self.id}: free_flow_time must be > 0")
        if not self.capacity > 0:
            raise ValidationError(f"link {self.id}: capacity must be > 0")


@dataclass(frozen=True)
class DynODPair:
    origin: int
    destination: int
    rates: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        if any(r < 0 for r in self.rates):
            raise ValidationError(f"O-D ({self.origin}, {self.destination}): negative demand rate")


@dataclass(frozen=True)
class DynConfig:
    T0: float = 1.0
    T: float = 8.0
    N: int = 20
    M: int = 10
    delta_tau: float = 0.05
    tau_max: float = 160.0
    tol_J: float | None = None
    zero_rate_eps: float = 1e-8
    cost_rtol: float = 1e-6
    perturb_eps: float = 0.05
    max_perturbations: int = 0
    min_step_fraction: float = 1e-6

    def __post_init__(self):
        if not (self.T0 > 0 and self.T > self.T0):
            raise ValidationError("need 0 < T0 < T")
        if self.N < 1 or self.M < 2:
            raise ValidationError("need N >= 1 and M > 1")
        if not self.delta_tau > 0:
            raise ValidationError("delta_tau must be > 0")
        steps = self.M * self.N * self.T / self.T0
        if abs(steps - round(steps)) > 1e-9 * steps:
            raise ValidationError("M * N * T / T0 must be an integer")

    @property
    def dt(self) -> float:
        return self.T0 / self.N

    @property
    def h(self) -> float:
        return self.dt / self.M

    @property
    def n_instants(self) -> int:
        """Number of simulation instants t_i = i * h, i = 0 .. M N T / T0."""
        return int(round(self.M * self.N * self.T / self.T0)) + 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_instants) * self.h

    def resolve_tol(self, demand) -> float:
        if self.tol_J is not None:
            return float(self.tol_J)
        return 1e-6 * float(np.max(demand)) ** 2


@dataclass(frozen=True)
class DynamicNetwork:
    links: tuple[PointQueueLink, ...]
    od_pairs: tuple[DynODPair, ...]
    routes: tuple[Route, ...]

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(self.links))
        object.__setattr__(self, "od_pairs", tuple(self.od_pairs))
        object.__setattr__(self, "routes", tuple(sorted(self.routes, key=lambda r: r.od)))
        validate_routes(self.links, self.od_pairs, self.routes)
        if len({len(od.rates) for od in self.od_pairs}) > 1:
            raise ValidationError("every O-D pair needs the same number of demand bins")

    @property
    def n_routes(self) -> int:
        return len(self.routes)

    @property
    def n_od(self) -> int:
        return len(self.od_pairs)

    @cached_property
    def link_by_id(self) -> dict[int, PointQueueLink]:
        return {link.id: link for link in self.links}

    @cached_property
    def route_od(self) -> np.ndarray:
        return np.array([r.od for r in self.routes], dtype=int)

    @cached_property
    def demand(self) -> np.ndarray:
        """Demand rates, shape (n_od, N)."""
        return np.array([od.rates for od in self.od_pairs], dtype=float)

    @cached_property
    def od_slices(self) -> list[slice]:
        bounds = np.searchsorted(self.route_od, np.arange(self.n_od + 1))
        return [slice(int(bounds[i]), int(bounds[i + 1])) for i in range(self.n_od)]

    def od_sum(self, values) -> np.ndarray:
        """Sum rows of a (n_routes, N) array within each O-D pair."""
        values = np.asarray(values, dtype=float)
        return np.stack([values[sl].sum(axis=0) for sl in self.od_slices])


# -- initial profiles ---------------------------------------------------------

def split_profile(dnet: DynamicNetwork, share: float) -> np.ndarray:
    """First route of each O-D takes ``share`` of the demand, the rest split evenly."""
    if not 0 <= share <= 1:
        raise ValidationError("split share must lie in [0, 1]")
    g = np.zeros((dnet.n_routes, dnet.demand.shape[1]))
    for i, sl in enumerate(dnet.od_slices):
        k = sl.stop - sl.start
        q = dnet.demand[i]
        if k == 1:
            g[sl.start] = q
            continue
        g[sl.start] = share * q
        g[sl.start + 1:sl.stop] = (1 - share) * q / (k - 1)
    return g


def random_profile(dnet: DynamicNetwork, seed: int) -> np.ndarray:
    """Per-bin uniform random split, normalized to the demand of each bin."""
    rng = np.random.default_rng(seed)
    g = np.zeros((dnet.n_routes, dnet.demand.shape[1]))
    for i, sl in enumerate(dnet.od_slices):
        w = rng.uniform(size=(sl.stop - sl.start, g.shape[1]))
        g[sl] = w / w.sum(axis=0) * dnet.demand[i]
    return g


def check_profile(dnet: DynamicNetwork, g, rtol: float = 1e-9) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    shape = (dnet.n_routes, dnet.demand.shape[1])
    if g.shape != shape:
        raise ValidationError(f"expected departure profile of shape {shape}, got {g.shape}")
    if np.any(g < 0) or not np.all(np.isfinite(g)):
        raise ValidationError("departure rates must be finite and non-negative")
    if np.any(np.abs(dnet.od_sum(g) - dnet.demand) > rtol * np.maximum(dnet.demand, 1.0)):
        raise ValidationError("route departure rates do not add up to the O-D demand in every bin")
    return g


# -- network loading ----------------------------------------------------------

def origin_curve(g_bins, cfg: DynConfig) -> np.ndarray:
    """Cumulative departures at the simulation instants for per-bin rates."""
    rates = np.zeros(cfg.n_instants - 1)
    rates[: cfg.N * cfg.M] = np.repeat(np.asarray(g_bins, dtype=float), cfg.M)
    return np.concatenate([[0.0], np.cumsum(rates * cfg.h)])


def _queue_exit(f_in, g_in, capacity, h):
    # E[i+1] = min(E[i] + h*cap, F[i] + h*g[i]) unrolled: E[i] = min_j (A[j] + (i-j) h cap), A[0] = 0
    avail = np.concatenate([[0.0], f_in[:-1] + h * g_in])
    ramp = np.arange(len(f_in)) * (h * capacity)
    exit_ = ramp + np.minimum.accumulate(avail - ramp)
    exit_ = np.minimum(np.maximum.accumulate(exit_), avail)
    exit_[0] = 0.0
    return exit_


def _shift_steps(link: PointQueueLink, h: float) -> int:
    s = link.free_flow_time / h
    if abs(s - round(s)) > 1e-6 * max(s, 1.0):
        raise ValidationError(f"link {link.id}: free-flow time must be a multiple of the simulation step {h:g}")
    return int(round(s))


def load_route(link: PointQueueLink, f_in, g_in, dt_sim: float, *, return_exit: bool = False):
    """Destination curve of a point-queue link.

    ``f_in`` is the cumulative inflow at the simulation instants and
    ``g_in[i]`` the inflow rate on [t_i, t_{i+1}).  The queue discharges at
    most ``capacity`` per unit time and vehicles reach the downstream end
    ``free_flow_time`` after leaving it.
    """
    f_in = np.asarray(f_in, dtype=float)
    g_in = np.asarray(g_in, dtype=float)
    if g_in.shape != (len(f_in) - 1,):
        raise ValidationError("need one inflow rate per simulation interval")
    if np.any(np.diff(f_in) < -1e-12 * max(1.0, abs(f_in[-1]))):
        raise ValidationError("input cumulative curve is decreasing")
    exit_ = _queue_exit(f_in, g_in, link.capacity, dt_sim)
    s = _shift_steps(link, dt_sim)
    f_out = np.zeros_like(f_in)
    if s < len(f_in):
        f_out[s:] = exit_[: len(f_in) - s]
    return (f_out, exit_) if return_exit else f_out


@dataclass
class LoadedRoute:
    origin: np.ndarray
    destination: np.ndarray
    h: float
    # per link: (cumulative inflow, queue exit curve, link)
    stages: list = field(default_factory=list, repr=False)


def load_network(dnet: DynamicNetwork, g, cfg: DynConfig) -> list[LoadedRoute]:
    """Load every route independently, chaining its links."""
    out = []
    for k, route in enumerate(dnet.routes):
        f0 = origin_curve(g[k], cfg)
        f = f0
        stages = []
        for lid in route.links:
            link = dnet.link_by_id[lid]
            rate = np.diff(f) / cfg.h
            nxt, exit_ = load_route(link, f, rate, cfg.h, return_exit=True)
            stages.append((f, exit_, link))
            f = nxt
        out.append(LoadedRoute(f0, f, cfg.h, stages))
    return out


# -- travel times -------------------------------------------------------------

def _closest(curve, targets):
    """Index of the sample closest to each target; ties go to the earliest instant."""
    idx = np.searchsorted(curve, targets, side="left")
    idx = np.clip(idx, 1, len(curve) - 1)
    lo, hi = idx - 1, idx
    pick = np.where(targets - curve[lo] <= curve[hi] - targets, lo, hi)
    # earliest instant carrying the same value
    return np.searchsorted(curve, curve[pick], side="left")


def route_travel_time(f_in, f_out, g_in, cfg: DynConfig) -> np.ndarray:
    """Mean travel time of the vehicles departing in each bin.

    The area between the origin and destination curves over the bin's
    vehicles, found from the destination samples closest to the bin's first
    and last vehicle, divided by g * dt.  Bins with g = 0 get ``nan``.
    """
    f_in = np.asarray(f_in, dtype=float)
    f_out = np.asarray(f_out, dtype=float)
    g_in = np.asarray(g_in, dtype=float)
    N, M, dt, h = cfg.N, cfg.M, cfg.dt, cfg.h
    total = f_in[N * M]
    if f_out[-1] < total - 1e-9 * max(1.0, total):
        raise HorizonError(
            f"{total - f_out[-1]:.6g} vehicles have not arrived by T={cfg.T:g}; lengthen the simulation horizon"
        )
    n = np.arange(N)
    a = f_in[n * M]
    b = f_in[(n + 1) * M]
    m_lo = _closest(f_out, a)
    m_hi = _closest(f_out, b)
    prefix = np.concatenate([[0.0], np.cumsum(f_out)])
    base = f_out[m_lo]
    riemann = (prefix[m_hi + 1] - prefix[m_lo + 1] - (m_hi - m_lo) * base) * h
    area = (b - a) * (m_hi / M - n - 0.5) * dt - riemann + (f_out[m_hi] - base) * h / 2
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(g_in > 0, area / (g_in * dt), np.nan)


def marginal_travel_time(loaded: LoadedRoute, t: float) -> float:
    """Travel time of an infinitesimal vehicle departing at ``t``.

    At each link it waits out the queue present on arrival, then adds the
    free-flow time.
    """
    start = t
    grid = np.arange(len(loaded.origin)) * loaded.h
    for f_in, exit_, link in loaded.stages:
        queue = np.interp(t, grid, f_in) - np.interp(t, grid, exit_)
        t = t + max(queue, 0.0) / link.capacity + link.free_flow_time
    return t - start


def dynamic_fifo_violation(g, c, q) -> np.ndarray:
    """J = q g (c - v) per route and bin for one O-D pair.

    ``g`` and ``c`` have shape (K, N), ``q`` shape (N,).  Evaluated as
    g * (s c - sum_j g_j c_j) with s the current bin total, which equals
    the definition on feasible profiles.  Routes with g = 0 contribute
    nothing and their (possibly undefined) cost is ignored.
    """
    g = np.asarray(g, dtype=float)
    c = np.where(g > 0, np.asarray(c, dtype=float), 0.0)
    q = np.asarray(q, dtype=float)
    s = g.sum(axis=0)
    gc = (g * c).sum(axis=0)
    J = g * (s * c - gc)
    return np.where(q > 0, J, 0.0)


def average_bin_time(g, c) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    c = np.where(g > 0, c, 0.0)
    s = g.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(s > 0, (g * c).sum(axis=0) / s, np.nan)


def dynamic_euler_step(g, J, delta_tau: float, min_fraction: float = 1e-6) -> np.ndarray:
    """g - dtau * J with the step halved separately in each bin that would go negative."""
    g = np.asarray(g, dtype=float)
    J = np.asarray(J, dtype=float)
    step = np.full(g.shape[1], float(delta_tau))
    floor = delta_tau * min_fraction
    while True:
        trial = g - step * J
        bad = np.any(trial < 0, axis=0)
        if not bad.any():
            return trial
        step[bad] *= 0.5
        if np.any(step < floor):
            raise StepUnderflowError("departure-rate step fell below its floor")


def dynamic_convergence_index(J, N: int, K_per_od) -> float:
    K = float(np.sum(K_per_od))
    if K <= 0:
        raise ValidationError("no initially used routes")
    return math.sqrt(float(np.sum(np.square(J))) / (N * K))


# -- solver -------------------------------------------------------------------

@dataclass(frozen=True)
class BinWitness:
    od: int
    bin: int
    unused: int
    used: int


@dataclass
class DynamicEquilibriumReport:
    g: np.ndarray
    kind: Kind
    witnesses: list[BinWitness]
    norm_J: float
    costs: np.ndarray
    curves: list[LoadedRoute]
    history: list[tuple[int, float, float]]
    iterations: int
    times: np.ndarray = field(repr=False)
    n_perturbations: int = 0

    @property
    def converged(self) -> bool:
        return self.kind is not Kind.NOT_CONVERGED

    def cumulative_at(self, t: float) -> np.ndarray:
        """Cumulative departures per route at time ``t`` (linear within bins)."""
        return np.array([np.interp(t, self.times, lr.origin) for lr in self.curves])


@dataclass
class _Evaluation:
    loaded: list[LoadedRoute]
    c: np.ndarray
    J: np.ndarray


def _evaluate(dnet: DynamicNetwork, g, cfg: DynConfig) -> _Evaluation:
    loaded = load_network(dnet, g, cfg)
    c = np.array([route_travel_time(lr.origin, lr.destination, g[k], cfg) for k, lr in enumerate(loaded)])
    J = np.zeros_like(g)
    for i, sl in enumerate(dnet.od_slices):
        J[sl] = dynamic_fifo_violation(g[sl], c[sl], dnet.demand[i])
    return _Evaluation(loaded, c, J)


def classify_dynamic(dnet: DynamicNetwork, g, ev: _Evaluation, cfg: DynConfig) -> tuple[Kind, list[BinWitness]]:
    """Bin by bin: PUE if an unused route beats the bin's mean used-route time.

    Unused routes are timed with an infinitesimal vehicle departing at the
    middle of the bin.  Times within one simulation step count as equal.
    """
    witnesses = []
    mids = (np.arange(cfg.N) + 0.5) * cfg.dt
    for i, sl in enumerate(dnet.od_slices):
        q = dnet.demand[i]
        gi = g[sl]
        for n in range(cfg.N):
            if q[n] <= 0:
                continue
            used = gi[:, n] >= cfg.zero_rate_eps * q[n]
            if used.all():
                continue
            v = average_bin_time(gi[used, n:n + 1], ev.c[sl][used, n:n + 1])[0]
            donor = sl.start + int(np.argmax(gi[:, n]))
            tol = max(cfg.cost_rtol * v, cfg.h)
            for k in np.flatnonzero(~used):
                if marginal_travel_time(ev.loaded[sl.start + k], mids[n]) < v - tol:
                    witnesses.append(BinWitness(i, n, sl.start + int(k), donor))
    return (Kind.PUE if witnesses else Kind.UE), witnesses


def perturb_dynamic(g, witnesses, perturb_eps: float, floor: float = 1e-6) -> np.ndarray:
    """Per bin, shift ``perturb_eps`` of rate from the largest used route to each witness."""
    g = np.array(g, dtype=float)
    groups: dict[tuple[int, int], list[BinWitness]] = {}
    for w in witnesses:
        groups.setdefault((w.od, w.bin), []).append(w)
    for (_, n), ws in groups.items():
        donor = ws[0].used
        targets = sorted({w.unused for w in ws})
        eps = perturb_eps
        while eps * len(targets) >= g[donor, n]:
            eps *= 0.5
            if eps < floor:
                raise StepUnderflowError(f"bin {n}: donor rate too small to perturb")
        g[targets, n] += eps
        g[donor, n] -= eps * len(targets)
    return g


def solve_dynamic(dnet: DynamicNetwork, g0, cfg: DynConfig | None = None) -> DynamicEquilibriumReport:
    """Load, time, and update departure rates until ||J|| <= tol or tau_max.

    With ``cfg.max_perturbations > 0`` a PUE is perturbed toward its
    shorter unused routes and the iteration continues.
    """
    cfg = cfg or DynConfig()
    if dnet.demand.shape[1] != cfg.N:
        raise ValidationError(f"demand has {dnet.demand.shape[1]} bins, configuration expects N={cfg.N}")
    g = check_profile(dnet, g0)
    tol = cfg.resolve_tol(dnet.demand)
    n_iter_max = int(math.ceil(cfg.tau_max / cfg.delta_tau - 1e-9))
    history = []
    n_pert = 0
    K = np.array([(g[sl] > 0).any(axis=1).sum() for sl in dnet.od_slices])
    ev = _evaluate(dnet, g, cfg)
    norm = dynamic_convergence_index(ev.J, cfg.N, K)
    history.append((0, 0.0, norm))
    it = 0
    while True:
        while norm > tol and it < n_iter_max:
            g = dynamic_euler_step(g, ev.J, cfg.delta_tau, cfg.min_step_fraction)
            it += 1
            ev = _evaluate(dnet, g, cfg)
            norm = dynamic_convergence_index(ev.J, cfg.N, K)
            history.append((it, it * cfg.delta_tau, norm))
        if norm > tol:
            kind, witnesses = Kind.NOT_CONVERGED, []
            logger.info("dynamic solve not converged: ||J||=%g > %g", norm, tol)
            break
        kind, witnesses = classify_dynamic(dnet, g, ev, cfg)
        if kind is not Kind.PUE or n_pert >= cfg.max_perturbations or it >= n_iter_max:
            break
        g = perturb_dynamic(g, witnesses, cfg.perturb_eps)
        n_pert += 1
        K = np.array([(g[sl] > 0).any(axis=1).sum() for sl in dnet.od_slices])
        ev = _evaluate(dnet, g, cfg)
        norm = dynamic_convergence_index(ev.J, cfg.N, K)
    return DynamicEquilibriumReport(
        g=g, kind=kind, witnesses=witnesses, norm_J=norm, costs=ev.c, curves=ev.loaded,
        history=history, iterations=it, times=cfg.times, n_perturbations=n_pert,
    )
