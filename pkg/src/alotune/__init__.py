"""Approximate leave-one-out tuning of penalized generalized linear models."""

__version__ = "0.1.0"

from .alo import AloReport, alo_gradient, alo_hessian, alo_value, evaluate, utilde_derivs
from .dataset import (
    ColumnMeta,
    DataError,
    Dataset,
    FoldAssignment,
    apply_standardization,
    attach_intercept,
    load_csv,
    make_folds,
    standardize,
)
from .estimators import ALOLogisticRegression, ALORidge
from .fd import FdReport, emit_fd_table, fd_gradient, fd_hessian
from .grid import GridResult, grid_search, kfold_cv_loss, log_grid
from .models import (
    Bridge,
    GroupRidge,
    LogisticLoss,
    Ridge,
    SquaredLoss,
    bridge_smoothing_coeffs,
    make_loss,
    make_regularizer,
)
from .solver import FitState, NumericalError, factorize, fit, leverage_vector
from .trust_region import TrustRegionConfig, TrustRegionTrace, minimize, solve_subproblem
from .tune import AloObjective, TuneResult, tune

__all__ = [
    "ALOLogisticRegression", "ALORidge", "AloObjective", "AloReport", "Bridge", "ColumnMeta",
    "DataError", "Dataset", "FdReport", "FitState", "FoldAssignment", "GridResult", "GroupRidge",
    "LogisticLoss", "NumericalError", "Ridge", "SquaredLoss", "TrustRegionConfig",
    "TrustRegionTrace", "TuneResult", "alo_gradient", "alo_hessian", "alo_value",
    "apply_standardization", "attach_intercept", "bridge_smoothing_coeffs", "emit_fd_table",
    "evaluate", "factorize", "fd_gradient", "fd_hessian", "fit", "grid_search", "kfold_cv_loss",
    "leverage_vector", "load_csv", "log_grid", "make_folds", "make_loss", "make_regularizer",
    "minimize", "solve_subproblem", "standardize", "tune", "utilde_derivs",
]
