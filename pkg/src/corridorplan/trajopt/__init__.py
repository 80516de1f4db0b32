"""Minimum-control-effort trajectories optimized inside sphere corridors."""

from .cost import barrier, barrier_grad, barrier_hess, cost_kernel, objective
from .lbfgs import LBFGSResult, lbfgs, line_search
from .minco import Trajectory, minco_construct, solve_coefficients
from .optimizer import (
    Boundary,
    OptimizeResult,
    OptimizerConfig,
    OptimizerState,
    ValidationReport,
    build_trajectory,
    cost_terms,
    default_initialization,
    evaluate_cost,
    optimize,
    validate,
)

__all__ = [
    "barrier", "barrier_grad", "barrier_hess", "cost_kernel", "objective",
    "LBFGSResult", "lbfgs", "line_search",
    "Trajectory", "minco_construct", "solve_coefficients",
    "Boundary", "OptimizeResult", "OptimizerConfig", "OptimizerState", "ValidationReport",
    "build_trajectory", "cost_terms", "default_initialization", "evaluate_cost", "optimize", "validate",
]
