"""Inner Newton solve of the regularized objective and hessian factorizations.

The hessian of the training objective at the fitted coefficients is
``H = X^T A X + W`` with ``A`` the diagonal of loss second derivatives and
``W`` the diagonal of penalty second derivatives.  Two factorizations
represent ``H^{-1}``:

* ``n_over_p`` -- dense Cholesky of the p-by-p matrix ``H``;
* ``p_over_n`` -- Cholesky of the n-by-n capacitance matrix
  ``A^{-1} + X_F W_F^{-1} X_F^T`` over the penalized coordinates ``F``,
  combined with a Schur complement for the ``k`` unpenalized ones.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .dataset import Dataset
from .models import LossDerivs, RegDerivs

__all__ = [
    "NumericalError",
    "HFactorization",
    "FitState",
    "factorize",
    "fit",
    "assemble_factorization",
    "leverage_vector",
    "objective_value",
]

N_OVER_P = "n_over_p"
P_OVER_N = "p_over_n"


class NumericalError(ArithmeticError):
    """A factorization broke down or a formula hit its pole."""


def _cholesky(M, what: str):
    try:
        return linalg.cholesky(M, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"cholesky of {what} failed: {exc}") from None


class HFactorization:
    """Represents the action of ``H^{-1}`` on vectors and matrices."""

    def __init__(self, X, a_diag, w_diag, path: str):
        X = np.asarray(X, dtype=float)
        self.path = path
        self.n, self.p = X.shape
        if path == N_OVER_P:
            H = X.T @ (a_diag[:, None] * X)
            H[np.diag_indices_from(H)] += w_diag
            self.H = H
            self.chol = _cholesky(H, "H")
        elif path == P_OVER_N:
            self._X = X
            self._w = w_diag
            if np.any(a_diag <= 0):
                i = int(np.flatnonzero(a_diag <= 0)[0])
                raise NumericalError(f"p_over_n path needs A_ii > 0; A[{i}] = {a_diag[i]}")
            if np.any(w_diag < 0):
                raise NumericalError("p_over_n path needs a non-negative W")
            self.free = np.flatnonzero(w_diag > 0)
            self.fixed = np.flatnonzero(w_diag == 0)
            self._a = a_diag
            self._w_free = w_diag[self.free]
            self._Xf = X[:, self.free]
            K = self._Xf @ (self._Xf.T / self._w_free[:, None])
            self.capacitance = K + np.diag(1.0 / a_diag)
            self.chol = _cholesky(self.capacitance, "A^-1 + X W^-1 X^T")
            if self.fixed.size:
                Xu = X[:, self.fixed]
                AXu = a_diag[:, None] * Xu
                Hfu = self._Xf.T @ AXu
                Huu = Xu.T @ AXu
                self._E = self._solve_free(Hfu)
                schur = Huu - Hfu.T @ self._E
                self._schur_chol = _cholesky(schur, "unpenalized-block Schur complement")
        else:
            raise ValueError(f"unknown factorization path {path!r}")

    def _solve_free(self, v):
        # Woodbury: W^-1 v - W^-1 X^T (A^-1 + X W^-1 X^T)^-1 X W^-1 v
        y = v / (self._w_free[:, None] if v.ndim == 2 else self._w_free)
        corr = linalg.cho_solve((self.chol, True), self._Xf @ y)
        return y - (self._Xf.T @ corr) / (self._w_free[:, None] if v.ndim == 2 else self._w_free)

    def solve(self, b):
        """Return ``H^{-1} b`` for a vector or a p-by-m matrix ``b``."""
        b = np.asarray(b, dtype=float)
        if self.path == N_OVER_P:
            return linalg.cho_solve((self.chol, True), b)
        # Woodbury subtracts two large terms when W is small (leverages near
        # their pole); one refinement step restores Cholesky-level accuracy.
        z = self._woodbury(b)
        return z + self._woodbury(b - self._apply_H(z))

    def _apply_H(self, z):
        a = self._a if z.ndim == 1 else self._a[:, None]
        w = self._w if z.ndim == 1 else self._w[:, None]
        return self._X.T @ (a * (self._X @ z)) + w * z

    def _woodbury(self, b):
        out = np.empty_like(b)
        bf = b[self.free]
        if not self.fixed.size:
            out[self.free] = self._solve_free(bf)
            return out
        zf = self._solve_free(bf)
        zu = linalg.cho_solve((self._schur_chol, True), b[self.fixed] - self._E.T @ bf)
        out[self.fixed] = zu
        out[self.free] = zf - self._E @ zu
        return out

    def half_solve(self, b):
        """``L^{-1} b`` with ``H = L L^T`` (n_over_p only)."""
        if self.path != N_OVER_P:
            raise ValueError("half_solve is only defined on the n_over_p path")
        return linalg.solve_triangular(self.chol, b, lower=True, check_finite=False)


def factorize(X, a_diag, w_diag, path: str = "auto") -> HFactorization:
    n, p = np.shape(X)
    if path == "auto":
        path = N_OVER_P if n >= p else P_OVER_N
    return HFactorization(X, np.asarray(a_diag, dtype=float), np.asarray(w_diag, dtype=float), path)


@dataclass(frozen=True)
class FitState:
    beta_hat: np.ndarray
    u: np.ndarray
    a_diag: np.ndarray
    w_diag: np.ndarray
    factorization: HFactorization
    h: np.ndarray
    converged: bool
    grad_norm: float
    n_iter: int
    lam: np.ndarray
    loss_derivs: LossDerivs
    reg_derivs: RegDerivs

    @property
    def path(self) -> str:
        return self.factorization.path


def objective_value(ds: Dataset, loss, reg, lam, beta) -> float:
    u = ds.features @ beta
    return float(np.sum(loss.value(ds.responses, u))
                 + np.sum(reg.derivs(lam, beta, ds.penalized).value))


def fit(ds: Dataset, loss, reg, lam, init=None, max_iter: int = 100,
        grad_tol: float | None = None, path: str = "auto") -> FitState:
    """Minimize the penalized training loss by damped Newton iterations.

    Steps are halved until the Armijo condition holds.  Once the gradient
    drops below ``grad_tol`` one extra Newton step is taken if it does not
    increase the gradient, which removes most of the remaining error.
    Returns a state with ``converged=False`` if ``max_iter`` is exhausted.
    """
    X, y = ds.features, ds.responses
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if not np.all(np.isfinite(lam)):
        raise ValueError("hyperparameters must be finite")
    penalized = ds.penalized
    beta = np.zeros(ds.p) if init is None else np.array(init, dtype=float)
    if grad_tol is None:
        g0 = X.T @ loss.derivs(y, np.zeros(ds.n)).d1
        grad_tol = 1e-10 * max(1.0, float(np.max(np.abs(g0))) if g0.size else 1.0)

    def terms(b):
        u = X @ b
        ld = loss.derivs(y, u)
        rd = reg.derivs(lam, b, penalized)
        f = float(np.sum(ld.value) + np.sum(rd.value))
        g = X.T @ ld.d1 + rd.d1
        return u, ld, rd, f, g

    u, ld, rd, f, g = terms(beta)
    gnorm = float(np.max(np.abs(g)))
    converged = False
    polished = False
    it = 0
    while True:
        if gnorm <= grad_tol:
            converged = True
            if polished:
                break
        if it >= max_iter:
            break
        fac = factorize(X, ld.d2, rd.d2, path)
        step = -fac.solve(g)
        it += 1
        if converged:
            polished = True
            cand = terms(beta + step)
            if np.max(np.abs(cand[4])) <= gnorm:
                beta = beta + step
                u, ld, rd, f, g = cand
                gnorm = float(np.max(np.abs(g)))
            break
        slope = float(g @ step)
        t = 1.0
        for _ in range(60):
            cand = terms(beta + t * step)
            if cand[3] <= f + 1e-4 * t * slope:
                break
            # at roundoff level the objective cannot resolve the decrease
            if abs(slope) * t <= 1e-15 * max(1.0, abs(f)) and np.max(np.abs(cand[4])) < gnorm:
                break
            t *= 0.5
        else:
            break
        beta = beta + t * step
        u, ld, rd, f, g = cand
        gnorm = float(np.max(np.abs(g)))

    fac = factorize(X, ld.d2, rd.d2, path)
    state = FitState(
        beta_hat=beta, u=u, a_diag=ld.d2, w_diag=rd.d2, factorization=fac,
        h=np.empty(0), converged=converged, grad_norm=gnorm, n_iter=it,
        lam=lam, loss_derivs=ld, reg_derivs=rd,
    )
    return _with_h(state, ds)


def _with_h(state: FitState, ds: Dataset) -> FitState:
    return FitState(**{**state.__dict__, "h": leverage_vector(state, ds)})


def assemble_factorization(state: FitState, ds: Dataset, path_hint: str = "auto") -> FitState:
    """Return ``state`` refactorized along ``path_hint`` (leverages recomputed)."""
    fac = factorize(ds.features, state.a_diag, state.w_diag, path_hint)
    return _with_h(FitState(**{**state.__dict__, "factorization": fac}), ds)


def leverage_vector(state: FitState, ds: Dataset) -> np.ndarray:
    """``h_i = x_i^T H^{-1} x_i`` for every row."""
    fac = state.factorization
    XT = ds.features.T
    if fac.path == N_OVER_P:
        Z = fac.half_solve(XT)
        return np.einsum("ji,ji->i", Z, Z)
    return np.einsum("ji,ji->i", XT, fac.solve(XT))
