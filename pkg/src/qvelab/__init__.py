"""Numerical laboratory for the quadratic vector equation ``-1/m = z + a + S m``.

Solve on the upper half-plane, extract the generating density, study the
stability operator and classify the singular points of the density.
"""

from .density import DensityProfile, detect_support, extract_density, moments, stieltjes_reconstruct
from .ensembles import (
    BlockParams,
    block_model,
    deformed_wigner_model,
    delta_critical,
    model_from_dict,
    reduced_block_solve,
    semicircle_exact,
    semicircle_model,
    translation_invariant_model,
)
from .errors import QveError, QveInputError, QveNumericError
from .estimator import QVEDensity
from .model import AssumptionReport, QveModel, build_model, check_assumptions
from .singularity import Kind, SingularityReport, analyze, connectivity_test
from .solver import SolutionGrid, SolutionSlice, solve_at, solve_grid, solve_many
from .stability import SpectralData, build_F, perron, spectral_data

__version__ = "0.1.0"

__all__ = [
    "AssumptionReport", "BlockParams", "DensityProfile", "Kind", "QVEDensity", "QveError",
    "QveInputError", "QveModel", "QveNumericError", "SingularityReport", "SolutionGrid",
    "SolutionSlice", "SpectralData", "analyze", "block_model", "build_F", "build_model",
    "check_assumptions", "connectivity_test", "deformed_wigner_model", "delta_critical",
    "detect_support", "extract_density", "model_from_dict", "moments", "perron",
    "reduced_block_solve", "semicircle_exact", "semicircle_model", "solve_at", "solve_grid",
    "solve_many", "spectral_data", "stieltjes_reconstruct", "translation_invariant_model",
]
