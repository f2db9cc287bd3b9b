"""Discretised causal variational principles in the static setting."""

__version__ = "0.1.0"

from .kernels import KernelSpec, Point, builtin_kernel, curvature_norm_bound, eval_lagrangian, second_variation_block
from .measure import DiscreteMeasure, apply_density, build_line_grid, build_periodic_grid, integrate
from .jets import FiberMetric, Jet, antiderivative_field, divergence, inner_solution_from_vector, jet_pointwise_inner
from .operator import (AdaptedSpace, AssembledOperator, assemble_bilinear, assemble_gram, build_problem,
                       compute_ell, compute_weight, el_residual, interior_nodes)
from .spectral import (SolveResult, SpectralDecomposition, apply_function, decompose, kernel_projection,
                       sobolev_norm, solve_linearized)
from .verify import OracleReport, fourier_spectrum_oracle, minimizer_identity_check, positivity_report

__all__ = [
    "KernelSpec", "Point", "builtin_kernel", "curvature_norm_bound", "eval_lagrangian",
    "second_variation_block", "DiscreteMeasure", "apply_density", "build_line_grid",
    "build_periodic_grid", "integrate", "FiberMetric", "Jet", "antiderivative_field", "divergence",
    "inner_solution_from_vector", "jet_pointwise_inner", "AdaptedSpace", "AssembledOperator",
    "assemble_bilinear", "assemble_gram", "build_problem", "compute_ell", "compute_weight",
    "el_residual", "interior_nodes", "SolveResult", "SpectralDecomposition", "apply_function",
    "decompose", "kernel_projection", "sobolev_norm", "solve_linearized", "OracleReport",
    "fourier_spectrum_oracle", "minimizer_identity_check", "positivity_report",
]
