"""Traffic assignment by route-flow dynamics driven by FIFO violations."""

__version__ = "0.1.0"

from .dynamic import (
    DynConfig,
    DynODPair,
    DynamicNetwork,
    PointQueueLink,
    load_route,
    random_profile,
    route_travel_time,
    solve_dynamic,
    split_profile,
)
from .elastic import LinearDemand, solve_elastic, solve_elastic_nested
from .enumeration import enumerate_equilibria
from .estimators import DynamicAssignment, ElasticAssignment, StaticAssignment
from .exceptions import (
    FifoTapError,
    HorizonError,
    InfeasibleFlowError,
    NotAnEquilibriumError,
    NotConvergedError,
    ScenarioIOError,
    StepUnderflowError,
    ValidationError,
)
from .network import Link, Network, ODPair, Route, bmw_objective, parallel_links, snapshot
from .routes import k_shortest_routes
from .scenario import Scenario, bundled, load_scenario, save_scenario
from .static import Kind, SolverConfig, classify, find_ue, perturb, solve_equilibrium

__all__ = [
    "DynConfig", "DynODPair", "DynamicNetwork", "PointQueueLink", "load_route", "random_profile",
    "route_travel_time", "solve_dynamic", "split_profile",
    "LinearDemand", "solve_elastic", "solve_elastic_nested", "enumerate_equilibria",
    "DynamicAssignment", "ElasticAssignment", "StaticAssignment",
    "FifoTapError", "HorizonError", "InfeasibleFlowError", "NotAnEquilibriumError", "NotConvergedError",
    "ScenarioIOError", "StepUnderflowError", "ValidationError",
    "Link", "Network", "ODPair", "Route", "bmw_objective", "parallel_links", "snapshot",
    "k_shortest_routes", "Scenario", "bundled", "load_scenario", "save_scenario",
    "Kind", "SolverConfig", "classify", "find_ue", "perturb", "solve_equilibrium",
]
