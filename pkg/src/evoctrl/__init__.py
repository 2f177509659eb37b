"""Constrained linear-quadratic optimal control of semidiscretized evolution equations."""

from .integrators import Scheme, simulate_adjoint, simulate_forward
from .linops import DescriptorSystem, TerminalWeight, adjoint_system
from .ocp import (Box, CostSpec, OptResult, Unconstrained, cost, gradient, solve_box_qp_dense,
                  solve_projected_gradient, solve_terminal_constrained, solve_unconstrained_cg,
                  stationarity_residual)
from .ph import PHNode, energy_optimal_reformulate
from .timegrid import IntervalTrajectory, NodeTrajectory, TimeGrid

__version__ = "0.1.0"

__all__ = [
    "Box", "CostSpec", "DescriptorSystem", "IntervalTrajectory", "NodeTrajectory", "OptResult",
    "PHNode", "Scheme", "TerminalWeight", "TimeGrid", "Unconstrained", "adjoint_system", "cost",
    "energy_optimal_reformulate", "gradient", "simulate_adjoint", "simulate_forward",
    "solve_box_qp_dense", "solve_projected_gradient", "solve_terminal_constrained",
    "solve_unconstrained_cg", "stationarity_residual",
]
