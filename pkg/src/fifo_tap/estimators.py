"""scikit-learn style wrappers around the solvers.

Each row of ``X`` is one starting state.  ``transform`` maps starts to the
equilibria they reach and ``predict`` to the equilibrium labels ("UE",
"PUE" or "NotConverged").  ``fit`` validates the network and solves once
from the first row (or from an equal split when ``X`` is None), exposing
the result as fitted attributes.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_non_negative

from .dynamic import DynConfig, DynamicNetwork, solve_dynamic, split_profile
from .elastic import solve_elastic
from .exceptions import ValidationError
from .network import Network, check_route_flows
from .static import SolverConfig, find_ue, solve_equilibrium


def _equal_split(net):
    sizes = np.bincount(net.route_od, minlength=net.n_od)
    return (net.demand / sizes)[net.route_od]


class _FlowAssignment(TransformerMixin, BaseEstimator):
    def _config(self) -> SolverConfig:
        return SolverConfig(delta_tau=self.delta_tau, tau_max=self.tau_max, tol_J=self.tol_J,
                            perturb_eps=self.perturb_eps, max_perturbations=self.max_perturbations)

    def _check_X(self, X, reset=False):
        X = check_array(X, dtype=np.float64)
        check_non_negative(X, type(self).__name__)
        if reset:
            self.n_features_in_ = X.shape[1]
        if X.shape[1] != self.network.n_routes:
            raise ValidationError(f"X has {X.shape[1]} columns, the network has {self.network.n_routes} routes")
        return X

    def fit(self, X=None, y=None):
        if not isinstance(self.network, Network):
            raise ValidationError("network must be a fifo_tap Network")
        self._cfg = self._config()
        if X is None:
            start = _equal_split(self.network)
            self.n_features_in_ = self.network.n_routes
        else:
            start = self._check_X(X, reset=True)[0]
        rep = self._solve(start)
        self.report_ = rep
        self.equilibrium_ = rep.flows
        self.costs_ = rep.costs
        self.kind_ = str(rep.kind)
        return self

    def _run(self, X):
        check_is_fitted(self, "equilibrium_")
        return [self._solve(row) for row in self._check_X(X)]

    def transform(self, X):
        return np.array([r.flows for r in self._run(X)])

    def predict(self, X):
        return np.array([str(r.kind) for r in self._run(X)], dtype=object)


class StaticAssignment(_FlowAssignment):
    """Fixed-demand assignment; ``perturb=False`` stops at the first equilibrium reached."""

    def __init__(self, network=None, delta_tau=5e-4, tau_max=1.0, tol_J=None, perturb_eps=0.05,
                 max_perturbations=20, perturb=True):
        self.network = network
        self.delta_tau = delta_tau
        self.tau_max = tau_max
        self.tol_J = tol_J
        self.perturb_eps = perturb_eps
        self.max_perturbations = max_perturbations
        self.perturb = perturb

    def _solve(self, f0):
        f0 = check_route_flows(self.network, f0, rtol=1e-6)
        if self.perturb:
            return find_ue(self.network, f0, self._cfg)
        return solve_equilibrium(self.network, f0, self._cfg, record=False)


class ElasticAssignment(_FlowAssignment):
    """Elastic demand; a start's O-D totals are its initial demands."""

    def __init__(self, network=None, demand_fns=None, delta_tau=5e-4, tau_max=1.0, tol_J=None,
                 perturb_eps=0.05, max_perturbations=20):
        self.network = network
        self.demand_fns = demand_fns
        self.delta_tau = delta_tau
        self.tau_max = tau_max
        self.tol_J = tol_J
        self.perturb_eps = perturb_eps
        self.max_perturbations = max_perturbations

    def _solve(self, f0):
        return solve_elastic(self.network, self.demand_fns, f0, self._cfg)

    def fit(self, X=None, y=None):
        super().fit(X, y)
        self.demand_ = self.report_.demand
        return self


class DynamicAssignment(TransformerMixin, BaseEstimator):
    """Time-dependent assignment.  Rows of ``X`` are departure profiles
    flattened route-major, i.e. ``g.reshape(-1)`` with ``g[route, bin]``."""

    def __init__(self, network=None, T0=1.0, T=8.0, N=20, M=10, delta_tau=0.05, tau_max=160.0,
                 tol_J=None, max_perturbations=0, init_split=0.5):
        self.network = network
        self.T0 = T0
        self.T = T
        self.N = N
        self.M = M
        self.delta_tau = delta_tau
        self.tau_max = tau_max
        self.tol_J = tol_J
        self.max_perturbations = max_perturbations
        self.init_split = init_split

    def _shape(self):
        return self.network.n_routes, self.N

    def _check_X(self, X, reset=False):
        X = check_array(X, dtype=np.float64)
        check_non_negative(X, type(self).__name__)
        n = int(np.prod(self._shape()))
        if X.shape[1] != n:
            raise ValidationError(f"X has {X.shape[1]} columns, expected routes * bins = {n}")
        if reset:
            self.n_features_in_ = n
        return X

    def fit(self, X=None, y=None):
        if not isinstance(self.network, DynamicNetwork):
            raise ValidationError("network must be a fifo_tap DynamicNetwork")
        self._cfg = DynConfig(T0=self.T0, T=self.T, N=self.N, M=self.M, delta_tau=self.delta_tau,
                              tau_max=self.tau_max, tol_J=self.tol_J, max_perturbations=self.max_perturbations)
        if X is None:
            g0 = split_profile(self.network, self.init_split)
            self.n_features_in_ = g0.size
        else:
            g0 = self._check_X(X, reset=True)[0].reshape(self._shape())
        rep = solve_dynamic(self.network, g0, self._cfg)
        self.report_ = rep
        self.equilibrium_ = rep.g
        self.costs_ = rep.costs
        self.kind_ = str(rep.kind)
        return self

    def _run(self, X):
        check_is_fitted(self, "equilibrium_")
        return [solve_dynamic(self.network, row.reshape(self._shape()), self._cfg) for row in self._check_X(X)]

    def transform(self, X):
        return np.array([r.g.reshape(-1) for r in self._run(X)])

    def predict(self, X):
        return np.array([str(r.kind) for r in self._run(X)], dtype=object)
