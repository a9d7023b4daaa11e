"""Multi-start search for every equilibrium (UE and PUE) of a fixed-demand network."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np

from .exceptions import ValidationError
from .network import Network
from .static import EquilibriumReport, Kind, SolverConfig, solve_equilibrium

logger = logging.getLogger(__name__)


@dataclass
class EnumerationResult:
    equilibria: list[EquilibriumReport]
    starts: np.ndarray
    hits: list[int]           # starts that landed on each equilibrium
    n_not_converged: int

    def support(self, i: int, net: Network, zero_flow_eps: float = 1e-8) -> tuple[int, ...]:
        f = self.equilibria[i].flows
        return tuple(np.flatnonzero(f >= zero_flow_eps * net.demand[net.route_od]).tolist())


def enumeration_starts(net: Network, n: int, seed: int | None = None) -> np.ndarray:
    """Simplex vertices first, then uniform points on randomly chosen faces.

    Equilibria with unused routes are only reachable from starts that
    already leave those routes empty, hence the faces.
    """
    if n < 1:
        raise ValidationError("need at least one start")
    rng = np.random.default_rng(seed)
    sizes = [sl.stop - sl.start for sl in net.od_slices]
    rows = []
    n_vertices = int(np.prod(sizes))
    if n_vertices <= n:
        for choice in itertools.product(*[range(k) for k in sizes]):
            f = np.zeros(net.n_routes)
            for i, sl in enumerate(net.od_slices):
                f[sl.start + choice[i]] = net.demand[i]
            rows.append(f)
    while len(rows) < n:
        f = np.zeros(net.n_routes)
        for i, sl in enumerate(net.od_slices):
            k = sizes[i]
            m = int(rng.integers(1, k + 1))
            face = rng.choice(k, size=m, replace=False)
            f[sl.start + face] = rng.dirichlet(np.ones(m)) * net.demand[i]
        rows.append(f)
    return np.array(rows[:n])


def enumerate_equilibria(net: Network, n_starts: int = 200, seed: int | None = None,
                         cfg: SolverConfig | None = None, dedupe_tol: float = 1e-3) -> EnumerationResult:
    """Solve from every start without perturbation and keep the distinct limits.

    Two limits are the same equilibrium when their flow vectors are closer
    than ``dedupe_tol`` (Euclidean).  The result is ordered by support size
    and then by the supporting route indices.
    """
    cfg = cfg or SolverConfig()
    starts = enumeration_starts(net, n_starts, seed)
    found: list[EquilibriumReport] = []
    hits: list[int] = []
    missed = 0
    for f0 in starts:
        rep = solve_equilibrium(net, f0, cfg, record=False)
        if rep.kind is Kind.NOT_CONVERGED:
            missed += 1
            continue
        for j, other in enumerate(found):
            if np.linalg.norm(other.flows - rep.flows) < dedupe_tol:
                hits[j] += 1
                break
        else:
            found.append(rep)
            hits.append(1)
    if missed:
        logger.warning("%d of %d starts did not converge", missed, len(starts))
    eps = cfg.zero_flow_eps * net.demand[net.route_od]

    def key(j):
        support = tuple(np.flatnonzero(found[j].flows >= eps).tolist())
        return len(support), support

    order = sorted(range(len(found)), key=key)
    return EnumerationResult([found[j] for j in order], starts, [hits[j] for j in order], missed)
