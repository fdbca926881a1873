"""Macroscopic traffic simulation and cooperative control for a mixed road
network: two arterial subregions joined by a bidirectional expressway,
with route guidance, perimeter control and ramp metering optimized jointly
by a receding-horizon PSO controller."""

__version__ = "0.1.0"

from .control import MpcConfig, Trajectory, run_closed_loop
from .demand import DemandProfile, PiecewiseLinear, trapezoid
from .expressway import (
    ExpresswayRouting,
    ExpresswayState,
    ExpresswayTopology,
    FundamentalDiagram,
    InvariantViolation,
)
from .network import NetworkModel, NetworkState, total_time_spent
from .pso import PsoConfig, pso_minimize
from .routes import Route, RouteChoiceParams, route_table
from .scenario import (
    Scenario,
    ScenarioError,
    ScenarioParseError,
    ScenarioValidationError,
    load_scenario,
)
from .subregion import MfdParams, SubregionState, TripLengthTable

__all__ = [
    "DemandProfile",
    "ExpresswayRouting",
    "ExpresswayState",
    "ExpresswayTopology",
    "FundamentalDiagram",
    "InvariantViolation",
    "MfdParams",
    "MpcConfig",
    "NetworkModel",
    "NetworkState",
    "PiecewiseLinear",
    "PsoConfig",
    "Route",
    "RouteChoiceParams",
    "Scenario",
    "ScenarioError",
    "ScenarioParseError",
    "ScenarioValidationError",
    "SubregionState",
    "Trajectory",
    "TripLengthTable",
    "load_scenario",
    "pso_minimize",
    "route_table",
    "run_closed_loop",
    "total_time_spent",
    "trapezoid",
]
