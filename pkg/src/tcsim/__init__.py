"""Multimodal corridor equilibrium under a tradable credit scheme.

Simulates stochastic-user-equilibrium mode shares (car / bus / demand-responsive
shuttle) on a single corridor with congestion from a trip-based MFD, station
waiting from capacity-constrained service operations, and an endogenous credit
price. A grid-search optimizer on top selects credit parameters and shuttle
fleet size.
"""

from tcsim.scenario import (
    CorridorScenario,
    DemandGroup,
    ModeParams,
    PolicyParams,
    ScenarioError,
    SolverConfig,
    Station,
    TimeGrid,
    discretize_demand,
    load_scenario,
)
from tcsim.equilibrium import EquilibriumResult, solve_equilibrium, warm_start_chain
from tcsim.bilevel import PolicyPoint, compare_policies, evaluate_policy, grid_search

__version__ = "0.1.0"

__all__ = [
    "CorridorScenario",
    "DemandGroup",
    "EquilibriumResult",
    "ModeParams",
    "PolicyParams",
    "PolicyPoint",
    "ScenarioError",
    "SolverConfig",
    "Station",
    "TimeGrid",
    "compare_policies",
    "discretize_demand",
    "evaluate_policy",
    "grid_search",
    "load_scenario",
    "solve_equilibrium",
    "warm_start_chain",
]
