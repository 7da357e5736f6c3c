"""Finite-difference checks of ALO derivatives."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .alo import evaluate
from .dataset import Dataset
from .solver import NumericalError

__all__ = ["FdRow", "FdReport", "fd_gradient", "fd_hessian", "emit_fd_table", "floored_rel_error"]

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-6


def floored_rel_error(exact, approx):
    exact = np.asarray(exact, dtype=float)
    return np.abs(exact - np.asarray(approx, dtype=float)) / np.maximum(1.0, np.abs(exact))


def fd_gradient(evaluate_f, lam, step: float = DEFAULT_STEP) -> np.ndarray:
    """``(f(lam + step e_j) - f(lam)) / step`` for each coordinate ``j``."""
    if not step > 0:
        raise ValueError("step must be positive")
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    f0 = evaluate_f(lam)
    out = np.empty(lam.shape[0])
    for j in range(lam.shape[0]):
        probe = lam.copy()
        probe[j] += step
        out[j] = (evaluate_f(probe) - f0) / step
    return out


def fd_hessian(evaluate_grad, lam, step: float = DEFAULT_STEP, scheme: str = "forward") -> np.ndarray:
    """Finite differences of an exact gradient, symmetrized.

    ``scheme="central"`` costs one extra gradient per coordinate and has
    O(step**2) truncation error instead of O(step).
    """
    if not step > 0:
        raise ValueError("step must be positive")
    if scheme not in ("forward", "central"):
        raise ValueError(f"unknown scheme {scheme!r}")
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    q = lam.shape[0]
    M = np.empty((q, q))
    if scheme == "forward":
        g0 = np.asarray(evaluate_grad(lam), dtype=float)
    for j in range(q):
        probe = lam.copy()
        probe[j] += step
        hi = np.asarray(evaluate_grad(probe), dtype=float)
        if scheme == "forward":
            M[:, j] = (hi - g0) / step
        else:
            probe[j] = lam[j] - step
            M[:, j] = (hi - np.asarray(evaluate_grad(probe), dtype=float)) / (2 * step)
    return 0.5 * (M + M.T)


@dataclass(frozen=True)
class FdRow:
    lam: tuple
    quantity: str
    exact: float
    approx: float
    rel_error: float
    failed: bool = False


@dataclass
class FdReport:
    rows: list[FdRow] = field(default_factory=list)

    @property
    def worst_rel_error(self) -> float:
        errs = [r.rel_error for r in self.rows if not r.failed]
        return max(errs) if errs else float("nan")

    @property
    def any_failed(self) -> bool:
        return any(r.failed for r in self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        q = max((len(r.lam) for r in self.rows), default=1)
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"lambda{j + 1}" for j in range(q)]
                   + ["quantity", "exact", "approx", "rel_error", "failed"])
        for r in self.rows:
            w.writerow([repr(v) for v in r.lam]
                       + [r.quantity, repr(r.exact), repr(r.approx), repr(r.rel_error), int(r.failed)])
        return buf.getvalue()

    def to_text(self) -> str:
        q = max((len(r.lam) for r in self.rows), default=1)
        head = [f"lambda{j + 1}" for j in range(q)] + ["quantity", "exact", "approx"]
        body = [[f"{v:.4g}" for v in r.lam] + [r.quantity, f"{r.exact:.6g}", f"{r.approx:.6g}"]
                for r in self.rows]
        widths = [max(len(x) for x in col) for col in zip(head, *body)]
        lines = ["  ".join(c.rjust(wd) for c, wd in zip(row, widths)) for row in [head] + body]
        return "\n".join(lines) + "\n"


def _quantities(q: int):
    grads = [("d1", (j,)) for j in range(q)]
    hess = [("d2", (s, t)) for s in range(q) for t in range(s, q)]
    return grads + hess


def _name(kind, idx):
    if kind == "d1":
        return f"df/dlam{idx[0] + 1}"
    s, t = idx
    return f"d2f/dlam{s + 1}dlam{t + 1}"


def emit_fd_table(ds: Dataset, loss, reg, lambda_points, step: float = DEFAULT_STEP,
                  path: str = "auto") -> FdReport:
    """Compare exact derivatives with forward differences at each point.

    Gradients are checked against differences of the ALO value, hessians
    against differences of the exact gradient.  A point whose fit fails is
    recorded with ``failed=True`` rows and the run continues.
    """
    pts = sorted((tuple(np.atleast_1d(np.asarray(p, dtype=float)).tolist()) for p in lambda_points))
    report = FdReport()
    q = reg.n_hyper
    for lam_t in pts:
        lam = np.array(lam_t)
        try:
            base = evaluate(ds, loss, reg, lam, order=2, path=path)
            init = base.state.beta_hat
            val = lambda x: evaluate(ds, loss, reg, x, order=0, init=init, path=path).value  # noqa: E731
            grd = lambda x: evaluate(ds, loss, reg, x, order=1, init=init, path=path).gradient  # noqa: E731
            g_fd = fd_gradient(val, lam, step)
            h_fd = fd_hessian(grd, lam, step)
        except (NumericalError, np.linalg.LinAlgError) as exc:
            logger.warning("fd check at %s failed: %s", lam_t, exc)
            for kind, idx in _quantities(q):
                report.rows.append(FdRow(lam_t, _name(kind, idx), np.nan, np.nan, np.nan, True))
            continue
        for kind, idx in _quantities(q):
            if kind == "d1":
                ex, ap = base.gradient[idx[0]], g_fd[idx[0]]
            else:
                ex, ap = base.hessian[idx], h_fd[idx]
            report.rows.append(FdRow(lam_t, _name(kind, idx), float(ex), float(ap),
                                     float(floored_rel_error(ex, ap))))
    return report
