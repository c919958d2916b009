"""Gromov-Wasserstein alignment at four cost tiers.

Cubic entropic, quadratic entropic with factored costs, quadratic
rank-constrained couplings, and linear rank-constrained couplings with
factored costs.
"""

from ._errors import ConvergenceError, InputError, NumericalError, RefusalError, ValidationError
from .costs import (
    FactoredCost,
    cost_apply,
    dense_cost,
    hadamard_square_factors,
    knn_shortest_path_cost,
    lr_distance_approx,
    normalize_costs,
    squared_euclidean_factors,
)
from .datasets import DatasetSpec, generate, isometric_pair
from .dykstra import KernelTriple, LowRankCoupling, project, random_triple, rank2_triple
from .entropic import (
    EntropicConfig,
    eval_gw_objective,
    init_lower_bound_entropic,
    solve_entropic_gw,
    solve_quad_entropic_gw,
)
from .gw_lr import (
    GradientTriple,
    GwLrConfig,
    delta_criterion,
    densify,
    gradient,
    smoothness_constants,
    solve_gw_lr,
    solve_gw_lr_linear,
    step_kernels,
)
from .lot import build_init_cost, first_lower_bound, lot_solve
from .oracles import allocation_scope, foscttm, gw_quadruple_sum
from .report import SolveReport
from .sinkhorn import Coupling, kl_project, kl_project_log

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError", "InputError", "NumericalError", "RefusalError", "ValidationError",
    "FactoredCost", "cost_apply", "dense_cost", "hadamard_square_factors", "knn_shortest_path_cost",
    "lr_distance_approx", "normalize_costs", "squared_euclidean_factors",
    "DatasetSpec", "generate", "isometric_pair",
    "KernelTriple", "LowRankCoupling", "project", "random_triple", "rank2_triple",
    "EntropicConfig", "eval_gw_objective", "init_lower_bound_entropic", "solve_entropic_gw",
    "solve_quad_entropic_gw",
    "GradientTriple", "GwLrConfig", "delta_criterion", "densify", "gradient", "smoothness_constants",
    "solve_gw_lr", "solve_gw_lr_linear", "step_kernels",
    "build_init_cost", "first_lower_bound", "lot_solve",
    "allocation_scope", "foscttm", "gw_quadruple_sum",
    "SolveReport", "Coupling", "kl_project", "kl_project_log",
]
