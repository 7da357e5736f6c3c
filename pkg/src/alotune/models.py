"""Loss and regularizer families.

Losses are evaluated per observation as functions of the linear predictor
``u`` and return derivatives through fourth order.  Regularizers are
separable penalties ``r_j(beta_j; lam)`` returning every mixed partial in
``(beta_j, lam)`` that the ALO gradient and hessian consume.

All evaluations are vectorized: scalars in, scalars out; arrays in, arrays
out.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.special import expit

__all__ = [
    "LossDerivs",
    "RegDerivs",
    "BridgeSmoothing",
    "SquaredLoss",
    "LogisticLoss",
    "Ridge",
    "GroupRidge",
    "Bridge",
    "squared_loss_derivs",
    "logistic_loss_derivs",
    "ridge_reg_derivs",
    "group_ridge_reg_derivs",
    "bridge_smoothing_coeffs",
    "bridge_reg_derivs",
    "make_loss",
    "make_regularizer",
]


@dataclass(frozen=True)
class LossDerivs:
    """Loss value and derivatives in ``u``."""

    value: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    d3: np.ndarray
    d4: np.ndarray


@dataclass(frozen=True)
class RegDerivs:
    """Penalty value and the partials in ``(beta_j, lam)``.

    The trailing axis runs over coordinates ``j``.  Hyperparameter axes
    come first: ``dlam_d1[s]`` is the derivative of ``r'`` with respect to
    ``lam[s]``, and ``dlamlam_d2[s, t]`` is the second derivative of
    ``r''`` with respect to ``lam[s]`` and ``lam[t]``.
    """

    value: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    d3: np.ndarray
    d4: np.ndarray
    dlam_d1: np.ndarray
    dlam_d2: np.ndarray
    dlam_d3: np.ndarray
    dlamlam_d1: np.ndarray
    dlamlam_d2: np.ndarray


# ---------------------------------------------------------------------------
# losses


def squared_loss_derivs(y, u) -> LossDerivs:
    y = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    resid = y - u
    two = np.full_like(resid, 2.0)
    zero = np.zeros_like(resid)
    return LossDerivs(resid**2, -2.0 * resid, two, zero, zero.copy())


def logistic_loss_derivs(y, u) -> LossDerivs:
    """Derivatives of ``log(1 + exp(-y u))`` for ``y`` in {-1, +1}.

    The even derivatives do not depend on ``y``; neither does the third,
    because ``y**2 == 1``.
    """
    y = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    if not np.all((y == 1.0) | (y == -1.0)):
        raise ValueError("logistic responses must be -1 or +1")
    p = expit(u)
    q = expit(-u)
    pq = p * q
    value = np.logaddexp(0.0, -y * u)
    d1 = -y * expit(-y * u)
    d3 = pq * (q - p)
    # q^2 + p^2 = 1 - 2pq, so the fourth derivative is pq(1 - 6pq)
    d4 = pq * (1.0 - 6.0 * pq)
    return LossDerivs(value, d1, pq, d3, d4)


class SquaredLoss:
    name = "squared"

    def derivs(self, y, u) -> LossDerivs:
        return squared_loss_derivs(y, u)

    def value(self, y, u):
        return (np.asarray(y, dtype=float) - np.asarray(u, dtype=float)) ** 2

    def __repr__(self):
        return "SquaredLoss()"


class LogisticLoss:
    name = "logistic"

    def derivs(self, y, u) -> LossDerivs:
        return logistic_loss_derivs(y, u)

    def value(self, y, u):
        return np.logaddexp(0.0, -np.asarray(y, dtype=float) * np.asarray(u, dtype=float))

    def __repr__(self):
        return "LogisticLoss()"


def make_loss(name: str):
    if name == "squared":
        return SquaredLoss()
    if name == "logistic":
        return LogisticLoss()
    raise ValueError(f"unknown loss {name!r}")


# ---------------------------------------------------------------------------
# ridge and group ridge


def _zero_reg(q: int, shape) -> RegDerivs:
    z = np.zeros(shape)
    zq = np.zeros((q,) + tuple(shape))
    zqq = np.zeros((q, q) + tuple(shape))
    return RegDerivs(z, z.copy(), z.copy(), z.copy(), z.copy(),
                     zq, zq.copy(), zq.copy(), zqq, zqq.copy())


def _group_ridge(lam, groups, beta, penalized) -> RegDerivs:
    lam = np.asarray(lam, dtype=float)
    beta = np.asarray(beta, dtype=float)
    groups = np.asarray(groups, dtype=int)
    q = lam.shape[0]
    if np.any(groups < 0) or np.any(groups >= q):
        raise ValueError(f"group index out of range [0, {q})")
    mask = np.asarray(penalized, dtype=float)
    lg = lam[groups]
    out = _zero_reg(q, beta.shape)
    # onehot[s, j] = 1 when coordinate j belongs to group s
    onehot = (groups[None, ...] == np.arange(q).reshape((q,) + (1,) * beta.ndim)) * mask
    value = lg**2 * beta**2 * mask
    d1 = 2.0 * lg**2 * beta * mask
    d2 = 2.0 * lg**2 * mask
    dlam_d1 = onehot * 4.0 * lg * beta
    dlam_d2 = onehot * 4.0 * lg
    diag = np.arange(q)
    dlamlam_d1 = out.dlamlam_d1
    dlamlam_d2 = out.dlamlam_d2
    dlamlam_d1[diag, diag] = onehot * 4.0 * beta
    dlamlam_d2[diag, diag] = onehot * 4.0
    return RegDerivs(value, d1, d2, out.d3, out.d4,
                     dlam_d1, dlam_d2, out.dlam_d3, dlamlam_d1, dlamlam_d2)


def ridge_reg_derivs(lam, beta_j, is_intercept: bool = False) -> RegDerivs:
    """Partials of ``lam**2 * beta**2`` (all zero at an intercept)."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if lam.shape != (1,):
        raise ValueError("ridge takes a single hyperparameter")
    return _group_ridge(lam, np.zeros(np.shape(beta_j), dtype=int), beta_j,
                        np.logical_not(is_intercept))


def group_ridge_reg_derivs(lam, group_of_j, beta_j, is_intercept: bool = False) -> RegDerivs:
    return _group_ridge(np.atleast_1d(lam), group_of_j, beta_j, np.logical_not(is_intercept))


class Ridge:
    """``lam**2 * ||beta||**2`` over penalized coordinates."""

    name = "ridge"
    n_hyper = 1

    def derivs(self, lam, beta, penalized) -> RegDerivs:
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        return _group_ridge(lam, np.zeros(len(beta), dtype=int), beta, penalized)

    def config(self) -> dict:
        return {"reg": "ridge"}

    def __repr__(self):
        return "Ridge()"


class GroupRidge:
    """Per-group ridge strengths ``lam[g_j]**2 * beta_j**2``.

    ``groups`` assigns each penalized coordinate a group index.  It may
    cover the full coefficient vector or only the penalized coordinates, in
    which case unpenalized positions are filled in at evaluation time.
    """

    name = "group_ridge"

    def __init__(self, groups, n_groups: int | None = None):
        self.groups = np.asarray(groups, dtype=int)
        if self.groups.ndim != 1 or self.groups.size == 0:
            raise ValueError("groups must be a non-empty 1-d integer array")
        if self.groups.min() < 0:
            raise ValueError("group indices must be non-negative")
        self.n_hyper = int(self.groups.max()) + 1 if n_groups is None else int(n_groups)
        if self.groups.max() >= self.n_hyper:
            raise ValueError(f"group index out of range [0, {self.n_hyper})")

    def _full_groups(self, penalized):
        penalized = np.asarray(penalized, dtype=bool)
        if self.groups.shape[0] == penalized.shape[0]:
            return self.groups
        if self.groups.shape[0] == int(penalized.sum()):
            full = np.zeros(penalized.shape[0], dtype=int)
            full[penalized] = self.groups
            return full
        raise ValueError(
            f"groups has length {self.groups.shape[0]}; expected {penalized.shape[0]} "
            f"or {int(penalized.sum())}"
        )

    def derivs(self, lam, beta, penalized) -> RegDerivs:
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        if lam.shape[0] != self.n_hyper:
            raise ValueError(f"expected {self.n_hyper} hyperparameters, got {lam.shape[0]}")
        return _group_ridge(lam, self._full_groups(penalized), beta, penalized)

    def config(self) -> dict:
        return {"reg": "group_ridge", "groups": self.groups.tolist(), "n_groups": self.n_hyper}

    def __repr__(self):
        return f"GroupRidge(groups={self.groups.tolist()})"


# ---------------------------------------------------------------------------
# bridge
#
# Near zero the power |t|**m is replaced by the polynomial
#     p(t) = a1 t^2 + a2 t^4 + a3 t^5 + a4 t^6 + a5 t^7
# matched to t**m at t = delta in value and four derivatives.  In the scaled
# variable s = t / delta the matching system has a fixed integer matrix,
# which is inverted exactly once in rational arithmetic.

_EXPONENTS = (2, 4, 5, 6, 7)


def _falling_coeffs(k: int) -> list[int]:
    """Integer coefficients (ascending powers of m) of m (m-1) ... (m-k+1)."""
    coeffs = [1]
    for r in range(k):
        nxt = [0] * (len(coeffs) + 1)
        for i, c in enumerate(coeffs):
            nxt[i] -= r * c
            nxt[i + 1] += c
        coeffs = nxt
    return coeffs


_FALLING = [_falling_coeffs(k) for k in range(5)]
_FALLING_POLY = [np.polynomial.Polynomial(c) for c in _FALLING]


def _falling_exact(k: int, m: Fraction, order: int) -> Fraction:
    coeffs = _FALLING[k]
    for _ in range(order):
        coeffs = [i * c for i, c in enumerate(coeffs)][1:] or [0]
    return sum((Fraction(c) * m**i for i, c in enumerate(coeffs)), Fraction(0))


def _exact_inverse(mat):
    n = len(mat)
    aug = [[Fraction(v) for v in row] + [Fraction(int(i == j)) for j in range(n)]
           for i, row in enumerate(mat)]
    for col in range(n):
        piv = next(r for r in range(col, n) if aug[r][col] != 0)
        aug[col], aug[piv] = aug[piv], aug[col]
        pv = aug[col][col]
        aug[col] = [v / pv for v in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [a - f * b for a, b in zip(aug[r], aug[col])]
    return [row[n:] for row in aug]


# rows: derivative order k = 0..4; columns: basis exponents; evaluated at s = 1
_BASIS_AT_ONE = [[int(np.prod(range(e - k + 1, e + 1))) for e in _EXPONENTS] for k in range(5)]
_BASIS_INV = _exact_inverse(_BASIS_AT_ONE)
# derivative-k multipliers of each basis monomial: falling(e, k)
_BASIS_FALLING = np.array(_BASIS_AT_ONE, dtype=float)
_EXP_ARR = np.array(_EXPONENTS, dtype=float)


def _solve_exact(rhs):
    return np.array([float(sum(b * r for b, r in zip(row, rhs))) for row in _BASIS_INV])


@dataclass(frozen=True)
class BridgeSmoothing:
    """Polynomial patch for the bridge penalty on ``|t| < delta``.

    ``coeffs`` holds ``a1..a5``; ``dcoeffs_dm`` and ``d2coeffs_dm2`` hold
    their first and second derivatives in the exponent ``m = 1 + lam2**2``.
    ``scaled`` stores the same polynomial in ``s = t / delta`` with
    ``p(t) = delta**m * sum(scaled[i] * s**e_i)`` which is what evaluation
    uses.
    """

    lambda2: float
    delta: float
    exponent: float
    coeffs: np.ndarray
    dcoeffs_dm: np.ndarray
    d2coeffs_dm2: np.ndarray
    scaled: np.ndarray
    dscaled_dm: np.ndarray
    d2scaled_dm2: np.ndarray

    def derivative(self, t, k: int):
        """k-th derivative of the patch polynomial at ``t`` (k = 0..4)."""
        s = np.asarray(t, dtype=float) / self.delta
        return self.delta ** (self.exponent - k) * _poly_scaled(self.scaled, s, k)


def _poly_scaled(x, s, k):
    # sum_i x_i * falling(e_i, k) * s**(e_i - k)
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    for i, e in enumerate(_EXPONENTS):
        if e >= k:
            out = out + x[i] * _BASIS_FALLING[k, i] * s ** (e - k)
    return out


def bridge_smoothing_coeffs(lambda2: float, delta: float = 0.01) -> BridgeSmoothing:
    """Match ``t**m`` (``m = 1 + lambda2**2``) at ``t = delta`` through 4 derivatives."""
    if not np.isfinite(delta) or delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    lambda2 = float(lambda2)
    m_exact = Fraction(lambda2) ** 2 + 1
    m = float(m_exact)
    x = _solve_exact([_falling_exact(k, m_exact, 0) for k in range(5)])
    dx = _solve_exact([_falling_exact(k, m_exact, 1) for k in range(5)])
    d2x = _solve_exact([_falling_exact(k, m_exact, 2) for k in range(5)])
    ld = np.log(delta)
    # scaled representation: p(t) = delta**m * sum x_i s**e_i; fold the
    # delta**m factor's m-dependence into the scaled derivatives
    dscaled = dx + x * ld
    d2scaled = d2x + 2.0 * dx * ld + x * ld**2
    powers = delta ** (m - _EXP_ARR)
    coeffs = powers * x
    return BridgeSmoothing(
        lambda2=lambda2,
        delta=float(delta),
        exponent=m,
        coeffs=coeffs,
        dcoeffs_dm=powers * dscaled,
        d2coeffs_dm2=powers * d2scaled,
        scaled=x,
        dscaled_dm=dscaled,
        d2scaled_dm2=d2scaled,
    )


def _bridge_phi(t, sm: BridgeSmoothing):
    """phi_k(t), d phi_k / dm, d2 phi_k / dm2 for k = 0..4, t >= 0.

    Returns three arrays of shape ``(5,) + t.shape``.
    """
    shape = np.shape(t)
    t = np.asarray(t, dtype=float).reshape(-1)
    m, delta = sm.exponent, sm.delta
    phi = np.zeros((5,) + t.shape)
    dphi = np.zeros_like(phi)
    d2phi = np.zeros_like(phi)
    outer = t >= delta
    inner = ~outer
    if np.any(outer):
        to = t[outer]
        lt = np.log(to)
        for k in range(5):
            c = _FALLING_POLY[k]
            c0, c1, c2 = c(m), c.deriv(1)(m), c.deriv(2)(m)
            base = to ** (m - k)
            phi[k][outer] = c0 * base
            dphi[k][outer] = (c1 + c0 * lt) * base
            d2phi[k][outer] = (c2 + 2.0 * c1 * lt + c0 * lt**2) * base
    if np.any(inner):
        s = t[inner] / delta
        for k in range(5):
            # the m-dependence of delta**m is folded into dscaled_dm and
            # d2scaled_dm2, so delta**(m-k) is the only prefactor
            scale = delta ** (m - k)
            phi[k][inner] = scale * _poly_scaled(sm.scaled, s, k)
            dphi[k][inner] = scale * _poly_scaled(sm.dscaled_dm, s, k)
            d2phi[k][inner] = scale * _poly_scaled(sm.d2scaled_dm2, s, k)
    full = (5,) + shape
    return phi.reshape(full), dphi.reshape(full), d2phi.reshape(full)


def _bridge(lam, beta, sm: BridgeSmoothing, penalized) -> RegDerivs:
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (2,):
        raise ValueError("bridge takes two hyperparameters (lam1, lam2)")
    l1, l2 = lam
    if not np.isclose(1.0 + l2 * l2, sm.exponent, rtol=1e-13, atol=0):
        raise ValueError("smoothing was built for a different lam2")
    beta = np.asarray(beta, dtype=float)
    mask = np.asarray(penalized, dtype=float)
    sign = np.sign(beta)
    phi, dphi, d2phi = _bridge_phi(np.abs(beta), sm)
    # odd derivatives of an even function flip sign; at beta = 0 they vanish
    sk = np.stack([sign if k % 2 else np.ones_like(sign) for k in range(5)])
    phi = phi * sk * mask
    dphi = dphi * sk * mask
    d2phi = d2phi * sk * mask
    dm = 2.0 * l2  # dm/dlam2
    a = l1 * l1
    shape = beta.shape
    dlam = np.zeros((3, 2) + shape)  # [k-1, s]
    for k in (1, 2, 3):
        dlam[k - 1, 0] = 2.0 * l1 * phi[k]
        dlam[k - 1, 1] = a * dphi[k] * dm
    dll = np.zeros((2, 2, 2) + shape)  # [k-1, s, t]
    for k in (1, 2):
        dll[k - 1, 0, 0] = 2.0 * phi[k]
        dll[k - 1, 0, 1] = dll[k - 1, 1, 0] = 2.0 * l1 * dphi[k] * dm
        dll[k - 1, 1, 1] = a * (d2phi[k] * dm * dm + 2.0 * dphi[k])
    return RegDerivs(
        a * phi[0], a * phi[1], a * phi[2], a * phi[3], a * phi[4],
        dlam[0], dlam[1], dlam[2], dll[0], dll[1],
    )


def bridge_reg_derivs(lam, beta_j, smoothing: BridgeSmoothing, is_intercept: bool = False) -> RegDerivs:
    return _bridge(lam, beta_j, smoothing, np.logical_not(is_intercept))


class Bridge:
    """Smoothed bridge penalty ``lam1**2 * |beta|**(1 + lam2**2)``."""

    name = "bridge"
    n_hyper = 2

    def __init__(self, delta: float = 0.01):
        if not delta > 0:
            raise ValueError("delta must be positive")
        self.delta = float(delta)
        self._cache: BridgeSmoothing | None = None

    def smoothing(self, lambda2: float) -> BridgeSmoothing:
        if self._cache is None or self._cache.lambda2 != float(lambda2):
            self._cache = bridge_smoothing_coeffs(lambda2, self.delta)
        return self._cache

    def derivs(self, lam, beta, penalized) -> RegDerivs:
        lam = np.asarray(lam, dtype=float)
        return _bridge(lam, beta, self.smoothing(lam[1]), penalized)

    def config(self) -> dict:
        return {"reg": "bridge", "delta": self.delta}

    def __repr__(self):
        return f"Bridge(delta={self.delta})"


def make_regularizer(name: str, groups=None, delta: float = 0.01):
    if name == "ridge":
        return Ridge()
    if name == "group_ridge":
        if groups is None:
            raise ValueError("group_ridge needs a groups assignment")
        return GroupRidge(groups)
    if name == "bridge":
        return Bridge(delta)
    raise ValueError(f"unknown regularizer {name!r}")
