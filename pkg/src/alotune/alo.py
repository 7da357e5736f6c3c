"""Approximate leave-one-out (ALO) value, gradient and hessian.

With ``u = X beta_hat``, leverages ``h_i = x_i^T H^{-1} x_i`` and loss
derivatives ``l1, l2`` at ``u_i``, the leave-one-out predictor is
approximated by

    ut_i = u_i + l1_i h_i / (1 - l2_i h_i)

and ``f(lam) = mean_i loss_i(ut_i)``.  Derivatives with respect to the
hyperparameters follow by implicit differentiation of the stationarity
condition ``X^T l1(u) + grad R(beta_hat) = 0``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .models import LossDerivs
from .solver import N_OVER_P, FitState, NumericalError, fit

__all__ = [
    "UtildeDerivs",
    "AloIntermediates",
    "AloReport",
    "POLE_TOL",
    "alo_value",
    "utilde_derivs",
    "alo_gradient",
    "alo_hessian",
    "evaluate",
]

POLE_TOL = 1e-12


@dataclass(frozen=True)
class UtildeDerivs:
    utilde: np.ndarray
    du: np.ndarray
    dh: np.ndarray
    duu: np.ndarray
    duh: np.ndarray
    dhh: np.ndarray


@dataclass(frozen=True)
class AloIntermediates:
    """Quantities from the gradient pass that the hessian pass reuses.

    ``dbeta`` is p-by-q, ``du_mat``, ``dh_mat`` and ``dA`` are n-by-q,
    ``dW`` is p-by-q.  ``T`` holds ``t_i = H^{-1} x_i`` as columns.  On
    the n_over_p path ``dH`` holds the q dense matrices ``dH/dlam_s``; on
    p_over_n it is ``None`` and ``G = X H^{-1} X^T`` is kept instead.
    """

    dbeta: np.ndarray
    du_mat: np.ndarray
    dh_mat: np.ndarray
    dA: np.ndarray
    dW: np.ndarray
    T: np.ndarray
    dH: np.ndarray | None
    G: np.ndarray | None
    utilde: UtildeDerivs
    dutilde: np.ndarray
    loss_at_utilde: LossDerivs


@dataclass(frozen=True)
class AloReport:
    value: float
    gradient: np.ndarray | None
    hessian: np.ndarray | None
    intermediates: AloIntermediates | None
    state: FitState


def _check_pole(denom):
    bad = np.flatnonzero(denom <= POLE_TOL)
    if bad.size:
        i = int(bad[0])
        raise NumericalError(
            f"1 - l''(u_i) h_i = {denom[i]:.3e} at observation {i}; the fit nearly interpolates it"
        )


def alo_value(state: FitState, loss, y) -> float:
    """ALO estimate of the mean out-of-sample loss at the fitted state."""
    ld = state.loss_derivs
    denom = 1.0 - ld.d2 * state.h
    _check_pole(denom)
    ut = state.u + ld.d1 * state.h / denom
    return float(np.mean(loss.value(y, ut)))


def utilde_derivs(loss_d: LossDerivs, h, u=None) -> UtildeDerivs:
    """Partials of ``ut = u + l1 h / (1 - l2 h)`` in ``u`` and ``h``.

    ``u`` only enters the returned ``utilde``; it defaults to zero so the
    field then holds the correction term alone.
    """
    l1, l2, l3, l4 = loss_d.d1, loss_d.d2, loss_d.d3, loss_d.d4
    h = np.asarray(h, dtype=float)
    u = np.zeros_like(h) if u is None else np.asarray(u, dtype=float)
    c = 1.0 - l2 * h
    c2 = c * c
    c3 = c2 * c
    return UtildeDerivs(
        utilde=u + l1 * h / c,
        du=1.0 / c + l1 * l3 * h * h / c2,
        dh=l1 / c2,
        duu=l3 * h / c2 + (l2 * l3 + l1 * l4) * h * h / c2 + 2.0 * l1 * l3 * l3 * h**3 / c3,
        duh=l2 / c2 + 2.0 * l1 * l3 * h / c3,
        dhh=2.0 * l1 * l2 / c3,
    )


def _dH_matrix(X, dA_s, dW_s):
    M = X.T @ (dA_s[:, None] * X)
    M[np.diag_indices_from(M)] += dW_s
    return M


def _quad_forms(state: FitState, X, T, G, dA_s, dW_s, dH_s=None):
    """``t_i^T M t_i`` for all i with ``M = X^T diag(dA_s) X + diag(dW_s)``."""
    if dH_s is not None:
        return np.einsum("ji,ji->i", T, dH_s @ T)
    return (G * G) @ dA_s + (T * T).T @ dW_s


def alo_gradient(state: FitState, ds: Dataset, loss, reg, lam):
    """Exact gradient of ALO in the hyperparameters.

    Returns ``(gradient, intermediates)``.
    """
    X, y = ds.features, ds.responses
    n = ds.n
    fac = state.factorization
    ld, rd = state.loss_derivs, state.reg_derivs
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    q = lam.shape[0]
    _check_pole(1.0 - ld.d2 * state.h)

    dbeta = -fac.solve(rd.dlam_d1.T)  # p x q
    du = X @ dbeta
    dA = ld.d3[:, None] * du
    dW = rd.dlam_d2.T + rd.d3[:, None] * dbeta

    T = fac.solve(X.T)
    if fac.path == N_OVER_P:
        G = None
        dH = np.stack([_dH_matrix(X, dA[:, s], dW[:, s]) for s in range(q)])
    else:
        G = X @ T
        dH = None
    dh = np.empty((n, q))
    for s in range(q):
        dh[:, s] = -_quad_forms(state, X, T, G, dA[:, s], dW[:, s],
                                None if dH is None else dH[s])

    ut = utilde_derivs(ld, state.h, state.u)
    dut = ut.du[:, None] * du + ut.dh[:, None] * dh
    lt = loss.derivs(y, ut.utilde)
    grad = lt.d1 @ dut / n
    inter = AloIntermediates(dbeta, du, dh, dA, dW, T, dH, G, ut, dut, lt)
    return grad, inter


def alo_hessian(state: FitState, ds: Dataset, loss, reg, lam, intermediates: AloIntermediates):
    """Exact hessian of ALO; entries are computed for s <= t and mirrored."""
    X = ds.features
    n = ds.n
    fac = state.factorization
    ld, rd = state.loss_derivs, state.reg_derivs
    it = intermediates
    q = it.dbeta.shape[1]
    pairs = [(s, t) for s in range(q) for t in range(s, q)]

    du, dbeta = it.du_mat, it.dbeta
    rhs = np.empty((ds.p, len(pairs)))
    for k, (s, t) in enumerate(pairs):
        rhs[:, k] = (X.T @ (ld.d3 * du[:, s] * du[:, t])
                     + rd.dlam_d2[s] * dbeta[:, t]
                     + rd.dlam_d2[t] * dbeta[:, s]
                     + rd.dlamlam_d1[s, t]
                     + rd.d3 * dbeta[:, s] * dbeta[:, t])
    d2beta = -fac.solve(rhs)
    d2u = X @ d2beta

    # first term of d2h: 2 (dH_s t_i)^T H^{-1} (dH_t t_i)
    if fac.path == N_OVER_P:
        R = np.stack([fac.half_solve(it.dH[s] @ it.T) for s in range(q)])
        cross = lambda s, t: np.einsum("ji,ji->i", R[s], R[t])  # noqa: E731
    else:
        V = np.stack([X.T @ (it.dA[:, s][:, None] * it.G) + it.dW[:, s][:, None] * it.T
                      for s in range(q)])
        U = np.stack([fac.solve(V[s]) for s in range(q)])
        cross = lambda s, t: np.einsum("ji,ji->i", V[s], U[t])  # noqa: E731

    ut, lt = it.utilde, it.loss_at_utilde
    dh, dut = it.dh_mat, it.dutilde
    hess = np.empty((q, q))
    for k, (s, t) in enumerate(pairs):
        d2A = ld.d3 * d2u[:, k] + ld.d4 * du[:, s] * du[:, t]
        d2W = (rd.dlamlam_d2[s, t]
               + rd.dlam_d3[s] * dbeta[:, t]
               + rd.dlam_d3[t] * dbeta[:, s]
               + rd.d3 * d2beta[:, k]
               + rd.d4 * dbeta[:, s] * dbeta[:, t])
        d2H = _dH_matrix(X, d2A, d2W) if fac.path == N_OVER_P else None
        d2h = 2.0 * cross(s, t) - _quad_forms(state, X, it.T, it.G, d2A, d2W, d2H)
        d2ut = (ut.du * d2u[:, k]
                + ut.duu * du[:, s] * du[:, t]
                + ut.duh * (du[:, s] * dh[:, t] + du[:, t] * dh[:, s])
                + ut.dh * d2h
                + ut.dhh * dh[:, s] * dh[:, t])
        val = float(np.sum(lt.d2 * dut[:, s] * dut[:, t] + lt.d1 * d2ut) / n)
        hess[s, t] = hess[t, s] = val
    return hess


def evaluate(ds: Dataset, loss, reg, lam, order: int = 2, init=None,
             path: str = "auto", max_iter: int = 100, grad_tol=None) -> AloReport:
    """Fit at ``lam`` and return the ALO value and derivatives up to ``order``."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if lam.shape[0] != reg.n_hyper:
        raise ValueError(f"{reg!r} takes {reg.n_hyper} hyperparameters, got {lam.shape[0]}")
    state = fit(ds, loss, reg, lam, init=init, path=path, max_iter=max_iter, grad_tol=grad_tol)
    if not state.converged:
        raise NumericalError(
            f"inner solve did not converge at lam={lam.tolist()} (|grad|={state.grad_norm:.3e})"
        )
    value = alo_value(state, loss, ds.responses)
    grad = hess = inter = None
    if order >= 1:
        grad, inter = alo_gradient(state, ds, loss, reg, lam)
    if order >= 2:
        hess = alo_hessian(state, ds, loss, reg, lam, inter)
    return AloReport(value, grad, hess, inter, state)
