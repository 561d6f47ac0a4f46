"""Debiased inference for bilinear functionals of least-squares solutions to linear inverse problems."""

from __future__ import annotations

from .debiased import EstimateReport, EstimatorConfig, FoldError, estimate, fit_nuisances, population_estimate
from .dgp import DGPSpec, ExplicitPMF, RealizedDGP, SpectralDesign, realize, sample
from .distributions import Data, JointPMF, Sample
from .function_space import BasisSpec, CoefVector, Domain, GramMatrix, Weighting, design_matrix, evaluate, gram
from .functionals import FunctionalPair, MKind, MTildeKind, WeightFunction
from .learners import (
    default_lambda,
    minimax_dual,
    minimax_primary,
    minimax_weak_riesz,
    projection_ls,
    riesz_regression,
)
from .oracle import OperatorMatrix, OracleSolution, Side, bias_identity_check, build_operator, solve_oracle, tikhonov_path
from .score import NuisanceTuple, score, score_values

__version__ = "0.1.0"

__all__ = [
    "BasisSpec", "CoefVector", "DGPSpec", "Data", "Domain", "EstimateReport", "EstimatorConfig",
    "ExplicitPMF", "FoldError", "FunctionalPair", "GramMatrix", "JointPMF", "MKind", "MTildeKind",
    "NuisanceTuple", "OperatorMatrix", "OracleSolution", "RealizedDGP", "Sample", "Side",
    "SpectralDesign", "WeightFunction", "Weighting", "bias_identity_check", "build_operator",
    "default_lambda", "design_matrix", "estimate", "evaluate", "fit_nuisances", "gram",
    "minimax_dual", "minimax_primary", "minimax_weak_riesz", "population_estimate",
    "projection_ls", "realize", "riesz_regression", "sample", "score", "score_values",
    "solve_oracle", "tikhonov_path",
]
