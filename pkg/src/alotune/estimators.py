"""scikit-learn compatible estimators that tune their penalty by minimizing ALO."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_is_fitted, validate_data

from .dataset import Dataset, attach_intercept, standardize
from .models import LogisticLoss, SquaredLoss, make_regularizer
from .trust_region import TrustRegionConfig
from .tune import tune

__all__ = ["ALORidge", "ALOLogisticRegression"]


class _ALOLinearModel(BaseEstimator):
    _loss = None
    _task = "regression"

    def __init__(self, penalty="ridge", groups=None, delta=0.01, lambda0=None,
                 fit_intercept=True, standardize=True, max_iter=100, tol=1e-6):
        self.penalty = penalty
        self.groups = groups
        self.delta = delta
        self.lambda0 = lambda0
        self.fit_intercept = fit_intercept
        self.standardize = standardize
        self.max_iter = max_iter
        self.tol = tol

    def _fit(self, X, y):
        ds = Dataset.from_arrays(X, y, self._task)
        if self.standardize:
            ds = standardize(ds)
        if self.fit_intercept:
            ds = attach_intercept(ds)
        reg = make_regularizer(self.penalty, self.groups, self.delta)
        cfg = TrustRegionConfig(grad_tol=self.tol, max_iter=self.max_iter)
        res = tune(ds, self._loss, reg, self.lambda0, cfg)

        beta = res.beta
        coef = beta[: X.shape[1]]
        intercept = float(beta[-1]) if self.fit_intercept else 0.0
        if self.standardize:
            mean = np.array([c.mean for c in ds.column_meta[: X.shape[1]]])
            scale = np.array([c.scale for c in ds.column_meta[: X.shape[1]]])
            coef = coef / scale
            intercept -= float(coef @ mean)
        self.coef_ = coef
        self.intercept_ = intercept
        self.lambda_ = res.lambda_star
        self.alo_ = res.f_star
        self.alo_gradient_ = res.gradient
        self.alo_hessian_ = res.hessian
        self.status_ = res.status
        self.n_iter_ = len(res.trace.records)
        self.trace_ = res.trace
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = validate_data(self, X, reset=False)
        return X @ self.coef_ + self.intercept_


class ALORidge(RegressorMixin, _ALOLinearModel):
    """Penalized least squares with ALO-tuned penalty strength.

    Parameters
    ----------
    penalty : {"ridge", "group_ridge", "bridge"}, default="ridge"
        Penalty family.  ``group_ridge`` needs ``groups`` (one group index
        per feature); ``bridge`` has two hyperparameters.
    groups : array-like of int, default=None
        Group index of each feature for ``group_ridge``.
    delta : float, default=0.01
        Half-width of the polynomial patch of the bridge penalty.
    lambda0 : array-like, default=None
        Starting hyperparameters; all ones when omitted.
    fit_intercept : bool, default=True
        Add an unpenalized intercept.
    standardize : bool, default=True
        Center and scale features before fitting.  Coefficients are reported
        on the original feature scale either way.
    max_iter : int, default=100
        Trust-region iteration cap.
    tol : float, default=1e-6
        Stop once the largest ALO gradient entry is below this.

    Attributes
    ----------
    coef_, intercept_ : fitted coefficients on the input scale.
    lambda_ : ndarray of tuned hyperparameters.
    alo_ : ALO estimate of the out-of-sample squared error at ``lambda_``.
    status_ : trust-region termination status.
    """

    _loss = SquaredLoss()
    _task = "regression"

    def fit(self, X, y):
        X, y = validate_data(self, X, y, y_numeric=True)
        return self._fit(X, y)

    def predict(self, X):
        return self.decision_function(X)


class ALOLogisticRegression(ClassifierMixin, _ALOLinearModel):
    """Binary penalized logistic regression with ALO-tuned penalty strength.

    Takes the same parameters as :class:`ALORidge`; ``alo_`` estimates the
    out-of-sample mean log-loss.
    """

    _loss = LogisticLoss()
    _task = "classification"

    def fit(self, X, y):
        X, y = validate_data(self, X, y)
        check_classification_targets(y)
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        if self.classes_.size != 2:
            raise ValueError(f"ALOLogisticRegression is binary; got {self.classes_.size} classes")
        return self._fit(X, np.where(y_idx == 1, 1.0, -1.0))

    def predict_proba(self, X):
        p1 = 1.0 / (1.0 + np.exp(-self.decision_function(X)))
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        return self.classes_[(self.decision_function(X) > 0).astype(int)]
