"""Reordered dG(0)/dG(1) transport solvers."""
from .discretization import Discretization, Params, SolverSettings, TransportData
from .solver import (
    StepStats,
    TransportState,
    cell_residual,
    mass_error,
    order_reduce,
    solve_block,
    solve_cell,
    solve_cycle_gauss_seidel,
    solve_global_newton,
    transport_step,
)

__all__ = [
    "Discretization",
    "Params",
    "SolverSettings",
    "TransportData",
    "StepStats",
    "TransportState",
    "cell_residual",
    "mass_error",
    "order_reduce",
    "solve_block",
    "solve_cell",
    "solve_cycle_gauss_seidel",
    "solve_global_newton",
    "transport_step",
]
