"""Penalized regression and HAC inference for mixed-frequency panels.

The package covers the full pipeline: compress high-frequency lag windows
through an orthogonal polynomial dictionary (``dictionary``), stack panels
into penalized design problems (``design``), solve the sparse-group LASSO
(``solver``), fit pooled or fixed-effects panel regressions with blocked
cross-validation (``estimators``), run debiased HAC group tests
(``inference``), and benchmark rejection frequencies on synthetic panels
(``simulate``).  ``cli`` exposes the same pipeline as a command line tool.
"""

from .design import (
    Covariate,
    DesignProblem,
    GroupStructure,
    PanelDataset,
    add_response_lags,
    build_midas_design,
    build_umidas_design,
    standardize,
    unstack,
    within_transform,
)
from .dictionary import MidasDictionary, beta_weights, build_dictionary, legendre_value
from .errors import (
    ConvergenceError,
    NearSingularDesignError,
    PanelMidasError,
    SchemaError,
    SingularCovarianceError,
)
from .estimators import (
    CvConfig,
    SgLassoFit,
    cross_validate,
    fit_fixed_effects,
    fit_lasso_umidas,
    fit_pooled,
    time_folds,
)
from .inference import (
    HacConfig,
    InferenceReport,
    NodewiseCv,
    PrecisionEstimate,
    debias,
    granger_test,
    hac_lrv,
    kernel_weight,
    nodewise_precision,
)
from .simulate import (
    DgpConfig,
    ExperimentGrid,
    ExperimentResult,
    run_experiment,
    simulate_panel,
)
from .solver import (
    PenaltyConfig,
    SolverConfig,
    SolverResult,
    lambda_grid,
    lambda_max,
    lambda_path,
    penalty_value,
    prox_sg,
    solve,
)

__version__ = "0.1.0"

__all__ = [
    "Covariate",
    "DesignProblem",
    "GroupStructure",
    "PanelDataset",
    "add_response_lags",
    "build_midas_design",
    "build_umidas_design",
    "standardize",
    "unstack",
    "within_transform",
    "MidasDictionary",
    "beta_weights",
    "build_dictionary",
    "legendre_value",
    "ConvergenceError",
    "NearSingularDesignError",
    "PanelMidasError",
    "SchemaError",
    "SingularCovarianceError",
    "CvConfig",
    "SgLassoFit",
    "cross_validate",
    "fit_fixed_effects",
    "fit_lasso_umidas",
    "fit_pooled",
    "time_folds",
    "HacConfig",
    "InferenceReport",
    "NodewiseCv",
    "PrecisionEstimate",
    "debias",
    "granger_test",
    "hac_lrv",
    "kernel_weight",
    "nodewise_precision",
    "DgpConfig",
    "ExperimentGrid",
    "ExperimentResult",
    "run_experiment",
    "simulate_panel",
    "PenaltyConfig",
    "SolverConfig",
    "SolverResult",
    "lambda_grid",
    "lambda_max",
    "lambda_path",
    "penalty_value",
    "prox_sg",
    "solve",
    "__version__",
]
