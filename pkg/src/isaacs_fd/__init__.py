"""Monotone finite-difference solvers for uniformly parabolic Isaacs equations."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .geometry import Ball, Box, CallbackDomain, GridFunction, SpaceTimeGrid, boundary_distance, build_grid
from .lattice import DirectionSet, decompose_diffusion, decompose_drift, standard_directions
from .operators import PucciParams, apply_F_h, apply_P_h, delta2_l, delta_l, delta_l_upwind, delta_t
from .problem import (
    ActionSets,
    IsaacsProblem,
    ManufacturedCase,
    constant_coefficient_problem,
    gamma_exponent,
    make_manufactured,
    validate_problem,
)
from .solver import SolverConfig, TruncationSpec, slice_residual, solve_isaacs, solve_truncated
from .analysis import (
    BarrierParams,
    RateReport,
    barrier_ratio,
    build_barrier,
    fit_rate,
    holder_seminorm,
    k_gap_study,
    sup_error,
)
