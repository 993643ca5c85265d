"""Latent limit order book: impact solvers, book simulation and experiments."""

from .analytic import (arcsine_limit, arcsine_propagator, C_of, cost_constant_rate, f_of_t,
                       impact_large_rate, impact_small_rate, mispricing_variance, solve_A,
                       stationary_phi_llob, stationary_phi_mr)
from .book import GridSpec, SimOptions, SimRun, extract_price, simulate
from .core import (BookState, ConvergenceError, ExecutionProfile, ImpactTrajectory, ModelParams,
                   ParameterError, PiecewiseRate, ReferencePath, brownian_path, make_params)
from .impact import KernelVariant, SolverConfig, residual, solve_impact, to_original_frame

__version__ = "0.1.0"

__all__ = [
    "BookState", "C_of", "ConvergenceError", "ExecutionProfile", "GridSpec", "ImpactTrajectory",
    "KernelVariant", "ModelParams", "ParameterError", "PiecewiseRate", "ReferencePath",
    "SimOptions", "SimRun", "SolverConfig", "arcsine_limit", "arcsine_propagator",
    "brownian_path", "cost_constant_rate", "extract_price", "f_of_t", "impact_large_rate",
    "impact_small_rate", "make_params", "mispricing_variance", "residual", "simulate",
    "solve_A", "solve_impact", "stationary_phi_llob", "stationary_phi_mr", "to_original_frame",
]
