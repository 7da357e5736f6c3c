"""Closed-form leave-one-out derivatives for single-strength ridge models.

These follow a separate code path from :mod:`alotune.alo`: explicit dense
inverses, no factorization objects and no generic regularizer plumbing.
They serve as independent cross-checks.

An unpenalized intercept is supported through the diagonal mask ``D``
(1 on penalized coordinates), so the penalty is ``lam**2 * beta^T D beta``.
With no intercept ``D = I`` and the formulas reduce to their textbook form.
"""
from __future__ import annotations

import numpy as np

from .dataset import Dataset
from .models import LogisticLoss, Ridge
from .solver import NumericalError, fit

__all__ = ["ridge_corollary_eval", "logistic_ridge_corollary_eval", "brute_force_lo"]


def ridge_corollary_eval(ds: Dataset, lam: float):
    """Exact LO value, derivative and second derivative for ridge regression."""
    X, y = ds.features, ds.responses
    n = ds.n
    lam = float(np.asarray(lam).reshape(-1)[0])
    D = np.diag(ds.penalized.astype(float))
    Minv = np.linalg.inv(X.T @ X + lam**2 * D)
    beta = Minv @ (X.T @ y)
    yhat = X @ beta
    eps = y - yhat
    # h_i = x_i^T H^{-1} x_i with H = 2 (X^T X + lam^2 D)
    h = 0.5 * np.einsum("ij,jk,ik->i", X, Minv, X)
    denom = 1.0 - 2.0 * h
    if np.any(denom <= 1e-12):
        raise NumericalError("1 - 2 h_i is non-positive; the fit interpolates")
    eps_lo = eps / denom

    MD = Minv @ D
    dyhat = -2.0 * lam * X @ (MD @ beta)
    dh = -lam * np.einsum("ij,jk,ik->i", X, MD @ Minv, X)
    d2yhat = 8.0 * lam**2 * X @ (MD @ MD @ beta) - 2.0 * X @ (MD @ beta)
    d2h = (4.0 * lam**2 * np.einsum("ij,jk,ik->i", X, MD @ MD @ Minv, X)
           - np.einsum("ij,jk,ik->i", X, MD @ Minv, X))

    dlo_dyhat = 1.0 / denom
    dlo_dh = -2.0 * eps / denom**2
    dlo_dyhat_dh = 2.0 / denom**2
    dlo_dh2 = -8.0 * eps / denom**3

    dlo = dlo_dyhat * dyhat + dlo_dh * dh
    d2lo = (dlo_dyhat * d2yhat + 2.0 * dlo_dyhat_dh * dyhat * dh
            + dlo_dh * d2h + dlo_dh2 * dh**2)
    value = float(np.mean(eps_lo**2))
    grad = float(np.mean(-2.0 * eps_lo * dlo))
    hess = float(np.mean(2.0 * dlo**2 - 2.0 * eps_lo * d2lo))
    return value, grad, hess


def logistic_ridge_corollary_eval(ds: Dataset, lam: float, init=None):
    """ALO value, derivative and second derivative for ridge logistic regression."""
    X, y = ds.features, ds.responses
    n = ds.n
    lam = float(np.asarray(lam).reshape(-1)[0])
    loss = LogisticLoss()
    state = fit(ds, loss, Ridge(), np.array([lam]), init=init)
    beta, u = state.beta_hat, state.u

    p = 1.0 / (1.0 + np.exp(-u))
    qq = 1.0 - p
    l1 = -y / (1.0 + np.exp(y * u))
    l2 = qq * p
    l3 = qq * p * (qq - p)
    l4 = qq * p * (qq**2 + p**2) - 4.0 * qq**2 * p**2

    Dv = ds.penalized.astype(float)
    D = np.diag(Dv)
    Hinv = np.linalg.inv(X.T @ (l2[:, None] * X) + 2.0 * lam**2 * D)
    h = np.einsum("ij,jk,ik->i", X, Hinv, X)
    c = 1.0 - l2 * h
    if np.any(c <= 1e-12):
        raise NumericalError("1 - l''(u_i) h_i is non-positive")
    ut = u + l1 * h / c

    HD = Hinv @ D
    du = -4.0 * lam * X @ (HD @ beta)
    dA = l3 * du
    dH = X.T @ (dA[:, None] * X) + 4.0 * lam * D
    HX = Hinv @ X.T  # columns H^{-1} x_i
    dh = -np.einsum("ji,jk,ki->i", HX, dH, HX)

    dut_du = 1.0 / c + l1 * l3 * h**2 / c**2
    dut_dh = l1 / c**2
    dut = dut_du * du + dut_dh * dh

    lt1 = -y / (1.0 + np.exp(y * ut))
    pt = 1.0 / (1.0 + np.exp(-ut))
    lt2 = pt * (1.0 - pt)
    value = float(np.mean(np.log1p(np.exp(-y * ut))))
    grad = float(np.mean(lt1 * dut))

    d2u = (-X @ (Hinv @ (X.T @ (l3 * du**2)))
           + 32.0 * lam**2 * X @ (HD @ HD @ beta)
           - 4.0 * X @ (HD @ beta))
    d2A = l3 * d2u + l4 * du**2
    d2H = X.T @ (d2A[:, None] * X) + 4.0 * D
    dHHX = dH @ HX
    d2h = (2.0 * np.einsum("ji,jk,ki->i", dHHX, Hinv, dHHX)
           - np.einsum("ji,jk,ki->i", HX, d2H, HX))
    dut_uu = (l3 * h / c**2 + (l2 * l3 + l1 * l4) * h**2 / c**2
              + 2.0 * l1 * l3**2 * h**3 / c**3)
    dut_uh = l2 / c**2 + 2.0 * l1 * l3 * h / c**3
    dut_hh = 2.0 * l1 * l2 / c**3
    d2ut = (dut_du * d2u + dut_uu * du**2 + 2.0 * dut_uh * du * dh
            + dut_dh * d2h + dut_hh * dh**2)
    hess = float(np.mean(lt2 * dut**2 + lt1 * d2ut))
    return value, grad, hess


def brute_force_lo(ds: Dataset, loss, reg, lam) -> float:
    """Leave-one-out loss by ``n`` refits (test oracle; O(n) fits)."""
    X, y = ds.features, ds.responses
    total = 0.0
    for i in range(ds.n):
        keep = np.arange(ds.n) != i
        state = fit(ds.subset(keep), loss, reg, lam)
        if not state.converged:
            raise NumericalError(f"refit without observation {i} did not converge")
        total += float(loss.value(y[i], X[i] @ state.beta_hat))
    return total / ds.n
