"""Numerical routines shared by all estimators."""

from .lad import lad_objective, weighted_lad
from .lasso import (
    PartialLassoProblem,
    lasso_lambda_max,
    partial_penalized_lasso,
)
from .mm import (
    bisquare_psi,
    bisquare_rho,
    bisquare_weight,
    mm_regression,
    mscale,
)
from .rng import RandomSource, normal_draw
from .wls import LinearFit, weighted_least_squares

__all__ = [
    "LinearFit",
    "PartialLassoProblem",
    "RandomSource",
    "bisquare_psi",
    "bisquare_rho",
    "bisquare_weight",
    "lad_objective",
    "lasso_lambda_max",
    "mm_regression",
    "mscale",
    "normal_draw",
    "partial_penalized_lasso",
    "weighted_lad",
    "weighted_least_squares",
]
