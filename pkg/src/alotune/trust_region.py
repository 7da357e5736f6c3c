"""Trust-region minimization with an exact dense subproblem solver."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "TrustRegionConfig",
    "TrustRegionRecord",
    "TrustRegionTrace",
    "SubproblemResult",
    "solve_subproblem",
    "minimize",
]

logger = logging.getLogger(__name__)

CONVERGED = "Converged"
MAX_ITER = "MaxIter"
SUBPROBLEM_FAILURE = "SubproblemFailure"


@dataclass(frozen=True)
class TrustRegionConfig:
    delta0: float = 1.0
    delta_max: float = 100.0
    eta_accept: float = 0.1
    shrink: float = 0.25
    expand: float = 2.0
    grad_tol: float = 1e-6
    max_iter: int = 100
    max_failures: int = 20

    def __post_init__(self):
        if not 0 < self.eta_accept < 0.25:
            raise ValueError("eta_accept must lie in (0, 0.25)")
        if not 0 < self.shrink < 1 < self.expand:
            raise ValueError("need 0 < shrink < 1 < expand")
        if not 0 < self.delta0 <= self.delta_max:
            raise ValueError("need 0 < delta0 <= delta_max")
        if self.grad_tol <= 0 or self.max_iter < 1:
            raise ValueError("grad_tol must be positive and max_iter at least 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TrustRegionRecord:
    lam: np.ndarray
    f: float
    grad_norm: float
    delta: float
    rho: float
    step_norm: float
    accepted: bool


@dataclass
class TrustRegionTrace:
    records: list[TrustRegionRecord] = field(default_factory=list)
    status: str = MAX_ITER
    n_evals: int = 0


@dataclass(frozen=True)
class SubproblemResult:
    step: np.ndarray
    predicted_reduction: float
    multiplier: float
    hard_case: bool


def _model(g, B, s):
    return float(g @ s + 0.5 * s @ B @ s)


def solve_subproblem(g, B, delta: float) -> SubproblemResult:
    """Minimize ``g^T s + s^T B s / 2`` subject to ``||s|| <= delta``.

    Works from the eigendecomposition of ``B``, which is cheap for the
    handful of hyperparameters this is used with, and covers the hard case
    (gradient orthogonal to the leftmost eigenspace) exactly.
    """
    g = np.asarray(g, dtype=float)
    B = np.asarray(B, dtype=float)
    if not (np.all(np.isfinite(g)) and np.all(np.isfinite(B))):
        raise ValueError("subproblem data must be finite")
    if B.shape != (g.size, g.size):
        raise ValueError("B must be square and match g")
    if not np.allclose(B, B.T, rtol=1e-10, atol=1e-14 * max(1.0, np.abs(B).max())):
        raise ValueError("B must be symmetric")
    if not delta > 0:
        raise ValueError("trust radius must be positive")
    B = 0.5 * (B + B.T)
    evals, evecs = np.linalg.eigh(B)
    gt = evecs.T @ g
    lmin = evals[0]
    scale = max(1.0, float(np.abs(evals).max()))

    def step_for(nu):
        return -evecs @ (gt / (evals + nu))

    def result(s, nu, hard=False):
        return SubproblemResult(s, -_model(g, B, s), float(nu), hard)

    if lmin > 1e-14 * scale:
        s = step_for(0.0)
        if np.linalg.norm(s) <= delta:
            return result(s, 0.0)

    # boundary solution: ||s(nu)|| = delta with nu > max(0, -lmin)
    lo = max(0.0, -lmin)
    gnorm = float(np.linalg.norm(g))
    lead = np.abs(evals - lmin) <= 1e-12 * scale
    gt_lead = float(np.linalg.norm(gt[lead]))
    if gt_lead <= 1e-12 * max(gnorm, 1e-300) or gnorm == 0.0:
        # possible hard case: leftmost component of g vanishes
        others = ~lead
        s_part = -evecs[:, others] @ (gt[others] / (evals[others] - lmin)) if others.any() else np.zeros_like(g)
        if lmin <= 0 and np.linalg.norm(s_part) <= delta:
            z = evecs[:, 0]
            tau = np.sqrt(max(delta**2 - float(s_part @ s_part), 0.0))
            cands = [s_part + tau * z, s_part - tau * z]
            s = min(cands, key=lambda c: _model(g, B, c))
            return result(s, -lmin, hard=True)

    hi = lo + gnorm / delta + 1.0
    while np.linalg.norm(step_for(hi)) > delta:
        hi = 2.0 * hi + 1.0

    def phi(nu):
        return 1.0 / delta - 1.0 / np.linalg.norm(step_for(nu))

    left = lo if lo == 0.0 else lo + 1e-15 * scale
    if phi(left) <= 0:
        nu = left
    else:
        nu = brentq(phi, left, hi, xtol=1e-15 * max(1.0, hi), rtol=4 * np.finfo(float).eps,
                    maxiter=500)
    s = step_for(nu)
    s *= min(1.0, delta / np.linalg.norm(s))
    return result(s, nu)


def minimize(objective, lambda0, cfg: TrustRegionConfig | None = None):
    """Minimize ``objective`` with a trust-region Newton iteration.

    ``objective(lam)`` returns ``(f, g, B)``.  Exceptions raised by it at a
    trial point reject the step and shrink the radius; too many in a row end
    the run with status ``SubproblemFailure``.

    Returns ``(lambda_star, f_star, trace)``.
    """
    cfg = cfg or TrustRegionConfig()
    x = np.array(lambda0, dtype=float).reshape(-1)
    trace = TrustRegionTrace()
    f, g, B = objective(x)
    trace.n_evals = 1
    delta = cfg.delta0
    failures = 0
    for _ in range(cfg.max_iter):
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= cfg.grad_tol:
            trace.status = CONVERGED
            break
        sub = solve_subproblem(g, B, delta)
        s, pred = sub.step, sub.predicted_reduction
        snorm = float(np.linalg.norm(s))
        try:
            trial = objective(x + s)
            trace.n_evals += 1
        except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            logger.debug("objective failed at %s: %s", x + s, exc)
            failures += 1
            trace.records.append(TrustRegionRecord(x.copy(), f, gnorm, delta, -np.inf, snorm, False))
            delta *= cfg.shrink
            if failures >= cfg.max_failures:
                trace.status = SUBPROBLEM_FAILURE
                break
            continue
        failures = 0
        f_new = trial[0]
        actual = f - f_new
        if pred > 0:
            rho = actual / pred
        else:
            rho = -np.inf
        accept = rho > cfg.eta_accept and np.isfinite(f_new)
        # below roundoff the ratio is noise; any strict decrease is progress
        if not accept and 0 < pred <= 1e-13 * max(1.0, abs(f)) and f_new < f:
            accept = True
        trace.records.append(TrustRegionRecord(x.copy(), f, gnorm, delta, float(rho), snorm, accept))
        if rho < 0.25:
            delta *= cfg.shrink
        elif rho > 0.75 and snorm >= delta * (1 - 1e-8):
            delta = min(cfg.expand * delta, cfg.delta_max)
        if accept:
            x = x + s
            f, g, B = trial
        if delta < 1e-15 * max(1.0, float(np.linalg.norm(x))):
            trace.status = SUBPROBLEM_FAILURE
            break
    else:
        gnorm = float(np.max(np.abs(g)))
        trace.status = CONVERGED if gnorm <= cfg.grad_tol else MAX_ITER
    return x, f, trace
