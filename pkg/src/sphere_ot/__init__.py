"""Monotone meshfree solver for optimal transport on the unit sphere."""

__version__ = "0.1.0"

from .cloud import PointCloud
from .cost import CostModel, transport_map
from .estimator import SphereTransportSolver
from .exceptions import ConfigError, NumericalError, SphereOTError
from .harness import convergence_study, manufacture, property_suite
from .solver import SolverConfig, SolveReport, TransportProblem, shift_u, solve_v

__all__ = [
    "ConfigError",
    "CostModel",
    "NumericalError",
    "PointCloud",
    "SolveReport",
    "SolverConfig",
    "SphereOTError",
    "SphereTransportSolver",
    "TransportProblem",
    "convergence_study",
    "manufacture",
    "property_suite",
    "shift_u",
    "solve_v",
    "transport_map",
]
