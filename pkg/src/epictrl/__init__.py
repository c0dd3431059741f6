"""Age- and space-structured SVIR epidemic simulation and optimal vaccination control."""

from .adjoint_solver import AdjointField, adjoint_birth_source, solve_backward
from .errors import ConfigurationError, DomainError, LineSearchError, NumericalError
from .grid import Grid, GridSpec, build_grid, characteristic_shift
from .model import (
    ControlLayout,
    ControlSchedule,
    ModelParams,
    birth_weight,
    expand_control,
    kernel_eval,
    reaction_matrix,
    table1_params,
)
from .nonlocal_op import ForceOfInfection, apply_lambda, apply_lambda_adjoint
from .objective import CostReport, cost, reduced_gradient
from .optimizer import OptimizeLog, OptimizerConfig, bb_step, nonmonotone_search, optimize, project
from .state_solver import (
    StateField,
    Trajectory,
    compute_birth,
    solve_forward,
    step,
    total_infectious,
)

__all__ = [
    "AdjointField",
    "ConfigurationError",
    "ControlLayout",
    "ControlSchedule",
    "CostReport",
    "DomainError",
    "ForceOfInfection",
    "Grid",
    "GridSpec",
    "LineSearchError",
    "ModelParams",
    "NumericalError",
    "OptimizeLog",
    "OptimizerConfig",
    "StateField",
    "Trajectory",
    "adjoint_birth_source",
    "apply_lambda",
    "apply_lambda_adjoint",
    "bb_step",
    "birth_weight",
    "build_grid",
    "characteristic_shift",
    "compute_birth",
    "cost",
    "expand_control",
    "kernel_eval",
    "nonmonotone_search",
    "optimize",
    "project",
    "reaction_matrix",
    "reduced_gradient",
    "solve_backward",
    "solve_forward",
    "step",
    "table1_params",
    "total_infectious",
]

__version__ = "0.1.0"
