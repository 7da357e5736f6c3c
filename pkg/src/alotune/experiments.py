"""Experiment workflows behind the command-line tool."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .alo import evaluate
from .dataset import Dataset, apply_standardization, attach_intercept, make_folds, standardize
from .grid import ALO, grid_search, log_grid
from .solver import NumericalError
from .trust_region import TrustRegionConfig
from .tune import tune

__all__ = ["prepare", "curve", "FoldResult", "kfold_experiment", "BenchResult", "bench"]


def prepare(ds: Dataset, intercept: bool = True) -> Dataset:
    """Standardize and (optionally) attach the unpenalized intercept."""
    ds = standardize(ds)
    return attach_intercept(ds) if intercept else ds


def curve(ds: Dataset, loss, reg, lambdas) -> np.ndarray:
    """Rows ``(lam, f, f', f'')`` for a single-hyperparameter family.

    Points where the fit fails are returned as NaN rows so the row count
    always matches ``lambdas``.
    """
    if reg.n_hyper != 1:
        raise ValueError("curve needs a single-hyperparameter regularizer")
    rows = []
    beta = None
    for lam in np.asarray(lambdas, dtype=float):
        try:
            rep = evaluate(ds, loss, reg, [lam], init=beta)
            beta = rep.state.beta_hat
            rows.append((lam, rep.value, rep.gradient[0], rep.hessian[0, 0]))
        except NumericalError:
            rows.append((lam, np.nan, np.nan, np.nan))
    return np.array(rows).reshape(-1, 4)


@dataclass(frozen=True)
class FoldResult:
    fold: int
    lam: np.ndarray
    alo: float
    test_error: float
    status: str


def kfold_experiment(ds: Dataset, loss, reg, k: int = 5, seed: int = 0, lambda0=None,
                     cfg: TrustRegionConfig | None = None, intercept: bool = True) -> list[FoldResult]:
    """Tune on each training fold and score the held-out fold.

    ``ds`` must be unstandardized; each training fold is standardized on
    its own statistics and the held-out rows reuse them.  The test error is
    the held-out mean loss (the negative mean log-likelihood for logistic).
    """
    folds = make_folds(ds.n, k, seed)
    out = []
    for f in range(k):
        train, test = folds.train_test(f)
        tr = prepare(ds.subset(train), intercept)
        res = tune(tr, loss, reg, lambda0, cfg)
        Xte = apply_standardization(tr, ds.features[test])
        u = Xte @ res.beta
        err = float(np.mean(loss.value(ds.responses[test], u)))
        out.append(FoldResult(f, res.lambda_star, res.f_star, err, res.status))
    return out


@dataclass(frozen=True)
class BenchResult:
    method: str
    mean_seconds: float
    std_seconds: float
    lam: np.ndarray
    alo: float


def bench(ds: Dataset, loss, reg, repeats: int = 10, grid_points: int = 10,
          grid_min: float = 1e-3, grid_max: float = 1e3, lambda0=None,
          cfg: TrustRegionConfig | None = None) -> list[BenchResult]:
    """Wall-clock comparison of trust-region tuning and an ALO grid search."""
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    results = []
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        res = tune(ds, loss, reg, lambda0, cfg)
        times.append(time.perf_counter() - t0)
    results.append(BenchResult("trust_region", float(np.mean(times)), float(np.std(times)),
                               res.lambda_star, res.f_star))
    times = []
    axes = log_grid(grid_min, grid_max, grid_points, reg.n_hyper)
    for _ in range(repeats):
        t0 = time.perf_counter()
        gr = grid_search(ds, loss, reg, axes, ALO)
        times.append(time.perf_counter() - t0)
    best = gr.best_point
    results.append(BenchResult("grid", float(np.mean(times)), float(np.std(times)),
                               best.lam, best.value))
    return results
