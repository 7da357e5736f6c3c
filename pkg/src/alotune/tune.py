"""Hyperparameter tuning: ALO as a trust-region objective."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .alo import AloReport, evaluate
from .dataset import Dataset
from .trust_region import TrustRegionConfig, TrustRegionTrace, minimize

__all__ = ["AloObjective", "TuneResult", "tune"]


class AloObjective:
    """Callable ``lam -> (f, grad, hessian)`` with warm-started inner fits.

    Each call refits the coefficients at ``lam``, starting from the most
    recently fitted coefficients.  Reports for evaluated points are kept and
    can be looked up with :meth:`report_at`.
    """

    def __init__(self, ds: Dataset, loss, reg, path: str = "auto"):
        self.ds = ds
        self.loss = loss
        self.reg = reg
        self.path = path
        self._beta = None
        self._reports: dict[tuple, AloReport] = {}
        self.n_calls = 0

    def __call__(self, lam):
        lam = np.asarray(lam, dtype=float)
        rep = evaluate(self.ds, self.loss, self.reg, lam, order=2, init=self._beta, path=self.path)
        self.n_calls += 1
        self._beta = rep.state.beta_hat
        self._reports[tuple(lam.tolist())] = rep
        # the optimizer only ever revisits the current iterate
        while len(self._reports) > 3:
            self._reports.pop(next(iter(self._reports)))
        return rep.value, rep.gradient, rep.hessian

    def report_at(self, lam) -> AloReport:
        key = tuple(np.asarray(lam, dtype=float).tolist())
        if key not in self._reports:
            self(lam)
        return self._reports[key]


@dataclass(frozen=True)
class TuneResult:
    lambda_star: np.ndarray
    f_star: float
    gradient: np.ndarray
    hessian: np.ndarray
    beta: np.ndarray
    trace: TrustRegionTrace
    config: TrustRegionConfig

    @property
    def status(self) -> str:
        return self.trace.status


def tune(ds: Dataset, loss, reg, lambda0=None, cfg: TrustRegionConfig | None = None,
         path: str = "auto") -> TuneResult:
    """Minimize ALO over the hyperparameters; ``lambda0`` defaults to ones.

    Every family here depends on each hyperparameter only through its
    square, so the result is reported with non-negative entries (gradient
    and hessian signs adjusted to match).
    """
    cfg = cfg or TrustRegionConfig()
    if lambda0 is None:
        lambda0 = np.ones(reg.n_hyper)
    lambda0 = np.atleast_1d(np.asarray(lambda0, dtype=float))
    if lambda0.shape != (reg.n_hyper,):
        raise ValueError(f"lambda0 must have {reg.n_hyper} entries")
    obj = AloObjective(ds, loss, reg, path)
    lam, f, trace = minimize(obj, lambda0, cfg)
    rep = obj.report_at(lam)
    sign = np.where(lam < 0, -1.0, 1.0)
    return TuneResult(np.abs(lam), f, rep.gradient * sign, rep.hessian * np.outer(sign, sign),
                      rep.state.beta_hat, trace, cfg)
