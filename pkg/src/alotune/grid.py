"""Grid-search baseline over log-spaced hyperparameter grids."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np

from .alo import alo_value
from .dataset import Dataset, FoldAssignment
from .solver import NumericalError, fit

__all__ = ["GridResult", "GridPoint", "log_grid", "grid_search", "kfold_cv_loss"]

logger = logging.getLogger(__name__)

ALO = "ALO"
KFOLD = "KFoldCV"


@dataclass(frozen=True)
class GridPoint:
    lam: np.ndarray
    value: float
    failed: bool = False


@dataclass(frozen=True)
class GridResult:
    points: list[GridPoint]
    best: int
    criterion: str

    @property
    def best_point(self) -> GridPoint:
        return self.points[self.best]


def log_grid(lo: float = 1e-3, hi: float = 1e3, points: int = 100, dims: int = 1):
    """Per-dimension log-spaced axes; a single range is repeated ``dims`` times."""
    if points < 1 or lo <= 0 or hi < lo:
        raise ValueError("need points >= 1 and 0 < lo <= hi")
    return [np.geomspace(lo, hi, points)] * dims


def kfold_cv_loss(ds: Dataset, loss, reg, lam, folds: FoldAssignment) -> float:
    """Mean over folds of the held-out mean loss."""
    losses = []
    for k in range(folds.k):
        train, test = folds.train_test(k)
        state = fit(ds.subset(train), loss, reg, lam)
        if not state.converged:
            raise NumericalError(f"fit on fold {k} did not converge")
        u = ds.features[test] @ state.beta_hat
        losses.append(float(np.mean(loss.value(ds.responses[test], u))))
    return float(np.mean(losses))


def grid_search(ds: Dataset, loss, reg, grid, criterion: str = ALO,
                folds: FoldAssignment | None = None) -> GridResult:
    """Evaluate ``criterion`` on the Cartesian product of ``grid`` axes.

    ``grid`` is a list of 1-d arrays, one per hyperparameter.  Points whose
    fit fails are kept with ``failed=True`` and never chosen as best.  Ties
    go to the lexicographically smallest hyperparameter vector.
    """
    axes = [np.atleast_1d(np.asarray(a, dtype=float)) for a in grid]
    if len(axes) != reg.n_hyper:
        raise ValueError(f"grid has {len(axes)} axes; {reg!r} takes {reg.n_hyper}")
    if any(a.size == 0 for a in axes):
        raise ValueError("grid axes must be non-empty")
    if criterion not in (ALO, KFOLD):
        raise ValueError(f"unknown criterion {criterion!r}")
    if criterion == KFOLD and folds is None:
        raise ValueError("KFoldCV needs a fold assignment")

    points = []
    beta = None
    for combo in itertools.product(*axes):
        lam = np.array(combo)
        try:
            if criterion == ALO:
                state = fit(ds, loss, reg, lam, init=beta)
                if not state.converged:
                    raise NumericalError("inner fit did not converge")
                beta = state.beta_hat
                value = alo_value(state, loss, ds.responses)
            else:
                value = kfold_cv_loss(ds, loss, reg, lam, folds)
            points.append(GridPoint(lam, value))
        except (NumericalError, np.linalg.LinAlgError) as exc:
            logger.warning("grid point %s skipped: %s", lam.tolist(), exc)
            points.append(GridPoint(lam, float("nan"), failed=True))

    ok = [i for i, pt in enumerate(points) if not pt.failed]
    if not ok:
        raise NumericalError("every grid point failed")
    vmin = min(points[i].value for i in ok)
    ties = [i for i in ok if points[i].value == vmin]
    best = min(ties, key=lambda i: tuple(points[i].lam))
    return GridResult(points, best, criterion)
