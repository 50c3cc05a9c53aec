"""Generalized lasso solution paths by majorization-minimization and dual stagewise descent."""

from .dual import DualState, GapReport, box_path_quadratic, dual_solver, duality_gap, least_norm_dual
from .losses import Dataset, LossModel, lipschitz_constant, objective_value, surrogate_response
from .path import (PathConfig, PathPoint, SolutionPath, backward_step, degrees_of_freedom, early_stop,
                   information_criterion, initial_fit, mm_dust_path, round_to_grid)
from .structure import (AggregationTree, StructureMatrix, build_structure, chain_difference, identity,
                        null_space_basis, pair_differences, tree_to_matrices, vstack)

__all__ = [
    "AggregationTree", "Dataset", "DualState", "GapReport", "LossModel", "PathConfig", "PathPoint",
    "SolutionPath", "StructureMatrix", "backward_step", "box_path_quadratic", "build_structure",
    "chain_difference", "degrees_of_freedom", "dual_solver", "duality_gap", "early_stop", "identity",
    "information_criterion", "initial_fit", "least_norm_dual", "lipschitz_constant", "mm_dust_path",
    "null_space_basis", "objective_value", "pair_differences", "round_to_grid", "surrogate_response",
    "tree_to_matrices", "vstack",
]
__version__ = "0.1.0"
