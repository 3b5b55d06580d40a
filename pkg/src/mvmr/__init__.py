"""Pleiotropy-robust multivariable Mendelian randomization from summary statistics.

The package provides the summary-data model (:mod:`mvmr.data`), the
numerical kernels (:mod:`mvmr.kernels`), six causal-effect estimators
(:mod:`mvmr.estimators`), a Monte Carlo study harness
(:mod:`mvmr.simulation`) and a command-line interface (:mod:`mvmr.cli`).
"""

from .data import (
    DiagnosticsTable,
    SummaryDataset,
    load_summary_csv,
    orient_to_risk_factor,
    residual_diagnostics,
    write_summary_csv,
)
from .estimators import (
    EstimationResult,
    LassoSelection,
    METHOD_NAMES,
    OutlierReport,
    mvmr_egger,
    mvmr_ivw,
    mvmr_lasso,
    mvmr_median,
    mvmr_presso,
    mvmr_robust,
    q_statistic,
    write_results_csv,
)
from .exceptions import (
    ConvergenceError,
    DataError,
    DegeneracyError,
    ModelError,
    MvmrError,
)
from .kernels import (
    LinearFit,
    RandomSource,
    lasso_lambda_max,
    mm_regression,
    normal_draw,
    partial_penalized_lasso,
    weighted_lad,
    weighted_least_squares,
)
from .simulation import (
    Effects,
    MetricsRow,
    ScenarioConfig,
    THETA_SETS,
    generate_individual,
    load_scenario_config,
    make_summary_dataset,
    r_squared,
    run_study,
    scenario_config,
    summarize_associations,
    write_metrics_csv,
)

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "DataError",
    "DegeneracyError",
    "DiagnosticsTable",
    "Effects",
    "EstimationResult",
    "LassoSelection",
    "LinearFit",
    "METHOD_NAMES",
    "MetricsRow",
    "ModelError",
    "MvmrError",
    "OutlierReport",
    "RandomSource",
    "ScenarioConfig",
    "SummaryDataset",
    "THETA_SETS",
    "generate_individual",
    "lasso_lambda_max",
    "load_scenario_config",
    "load_summary_csv",
    "make_summary_dataset",
    "mm_regression",
    "mvmr_egger",
    "mvmr_ivw",
    "mvmr_lasso",
    "mvmr_median",
    "mvmr_presso",
    "mvmr_robust",
    "normal_draw",
    "orient_to_risk_factor",
    "partial_penalized_lasso",
    "q_statistic",
    "r_squared",
    "residual_diagnostics",
    "run_study",
    "scenario_config",
    "summarize_associations",
    "weighted_lad",
    "weighted_least_squares",
    "write_metrics_csv",
    "write_results_csv",
    "write_summary_csv",
    "__version__",
]
