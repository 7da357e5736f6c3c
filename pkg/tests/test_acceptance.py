"""Acceptance criteria, one test per criterion.

Each test registers a PASS/FAIL line that is printed in the terminal summary
(see conftest.py).  Run with ``pytest tests/test_acceptance.py`` or directly
as a script.
"""
import functools
import os
import time

import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from alotune import (
    Bridge,
    Dataset,
    GroupRidge,
    LogisticLoss,
    Ridge,
    SquaredLoss,
    attach_intercept,
    bridge_smoothing_coeffs,
    evaluate,
    fit,
    grid_search,
    load_csv,
    log_grid,
    standardize,
    tune,
)
from alotune.alo import alo_gradient, alo_hessian
from alotune.closed_form import logistic_ridge_corollary_eval, ridge_corollary_eval
from alotune.experiments import kfold_experiment
from alotune.fd import fd_gradient, fd_hessian, floored_rel_error

import _data

FD_TOL = 1e-4


# --- 1 ----------------------------------------------------------------------------

def dense_lo(X, y, lam, penalized):
    D = np.diag(np.asarray(penalized, float))
    out = 0.0
    for i in range(len(y)):
        keep = np.arange(len(y)) != i
        b = np.linalg.solve(X[keep].T @ X[keep] + lam**2 * D, X[keep].T @ y[keep])
        out += (y[i] - X[i] @ b) ** 2
    return out / len(y)


def test_ridge_alo_equals_leave_one_out(acceptance):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = 0.0
    count = 0
    for k in range(200):
        n, p = int(rng.integers(5, 31)), int(rng.integers(1, 6))
        ds = _data.regression(rng, n, p, intercept=bool(k % 2))
        lam = np.sqrt(_data.log_uniform(rng, 1e-3, 1e3))
        got = evaluate(ds, SquaredLoss(), Ridge(), [lam], order=0).value
        ref = dense_lo(ds.features, ds.responses, lam, ds.penalized)
        worst = max(worst, abs(got - ref) / abs(ref))
        count += 1
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and elapsed < 60
    acceptance("1", ok, f"ridge ALO vs brute-force LO on {count} instances: "
                        f"worst rel err {worst:.2e} (tol 1e-8), {elapsed:.1f}s (limit 60s)")
    assert ok


# --- 2 and 3 --------------------------------------------------------------------------

FAMILIES = [(loss, reg) for loss in ("squared", "logistic")
            for reg in ("ridge", "group2", "group3", "bridge")]


def _make_family(reg_name, p, rng):
    if reg_name == "ridge":
        return Ridge(), _data.log_uniform(rng, 0.2, 5, 1)
    if reg_name.startswith("group"):
        q = int(reg_name[-1])
        groups = rng.permutation(np.arange(p) % q)
        return GroupRidge(groups, n_groups=q), _data.log_uniform(rng, 0.2, 5, q)
    return Bridge(), np.array([_data.log_uniform(rng, 0.2, 5), rng.uniform(0.75, 1.3)])


@functools.lru_cache(maxsize=None)
def fd_sweep(points_per_family=50):
    """Exact vs forward-difference derivatives at random (instance, lambda) points."""
    rng = np.random.default_rng(2)
    out = {}
    t_grad = t_hess = 0.0
    for loss_name, reg_name in FAMILIES:
        g_err, h_err, h_fwd_err, asym = [], [], [], 0.0
        for _ in range(points_per_family):
            n, p = int(rng.integers(20, 61)), int(rng.integers(2, 9))
            make = _data.classification if loss_name == "logistic" else _data.regression
            ds = make(rng, n, p, intercept=True)
            loss = LogisticLoss() if loss_name == "logistic" else SquaredLoss()
            reg, lam = _make_family(reg_name, p, rng)

            t0 = time.perf_counter()
            rep = evaluate(ds, loss, reg, lam, order=1)
            b = rep.state.beta_hat
            g_fd = fd_gradient(lambda x: evaluate(ds, loss, reg, x, order=0, init=b).value, lam)
            t1 = time.perf_counter()
            H = alo_hessian(rep.state, ds, loss, reg, lam, rep.intermediates)
            grad = lambda x: evaluate(ds, loss, reg, x, order=1, init=b).gradient
            h_fd = fd_hessian(grad, lam, scheme="central")
            t2 = time.perf_counter()
            h_fwd = fd_hessian(grad, lam)
            t_grad += t1 - t0
            t_hess += t2 - t1

            g_err.append(floored_rel_error(rep.gradient, g_fd).max())
            h_err.append(floored_rel_error(H, h_fd).max())
            h_fwd_err.append(floored_rel_error(H, h_fwd).max())
            asym = max(asym, float(np.abs(H - H.T).max()))
        out[(loss_name, reg_name)] = (np.array(g_err), np.array(h_err), asym, np.array(h_fwd_err))
    return out, t_grad, t_hess


def test_gradient_matches_forward_differences(acceptance):
    res, t_grad, _ = fd_sweep()
    worst = {k: v[0].max() for k, v in res.items()}
    n_pts = min(len(v[0]) for v in res.values())
    ok = max(worst.values()) <= FD_TOL and t_grad < 120
    detail = ", ".join(f"{a}/{b} {w:.1e}" for (a, b), w in worst.items())
    acceptance("2", ok, f"gradient vs forward FD (h=1e-6), {n_pts} points x {len(res)} families, "
                        f"worst floored rel err per family: {detail} (tol 1e-4); {t_grad:.1f}s (limit 120s)")
    assert ok


def test_hessian_matches_differenced_gradient(acceptance):
    res, _, t_hess = fd_sweep()
    worst = {k: v[1].max() for k, v in res.items()}
    asym = max(v[2] for v in res.values())
    ok = max(worst.values()) <= FD_TOL and asym == 0.0 and t_hess < 180
    detail = ", ".join(f"{a}/{b} {w:.1e}" for (a, b), w in worst.items())
    fwd = np.concatenate([v[3] for v in res.values()])
    acceptance("3", ok, f"hessian vs central FD (h=1e-6) of exact gradient, worst floored rel err per "
                        f"family: {detail} (tol 1e-4); max |H - H^T| = {asym:g}; {t_hess:.1f}s (limit 180s); "
                        f"forward FD for reference: worst {fwd.max():.1e}, "
                        f"{int((fwd > FD_TOL).sum())}/{fwd.size} points above 1e-4")
    assert ok


# --- 4 ----------------------------------------------------------------------------

def test_generic_engine_equals_closed_forms(acceptance):
    rng = np.random.default_rng(4)

    def rel(a, b):
        return abs(a - b) / max(1.0, abs(b))

    worst_sq = worst_lg = 0.0
    for k in range(50):
        ds = _data.regression(rng, int(rng.integers(10, 40)), int(rng.integers(1, 7)), intercept=bool(k % 2))
        lam = _data.log_uniform(rng, 0.05, 10)
        rep = evaluate(ds, SquaredLoss(), Ridge(), [lam])
        v, g, h = ridge_corollary_eval(ds, lam)
        worst_sq = max(worst_sq, rel(rep.value, v), rel(rep.gradient[0], g), rel(rep.hessian[0, 0], h))
    for k in range(50):
        ds = _data.classification(rng, int(rng.integers(20, 60)), int(rng.integers(1, 7)),
                                  intercept=bool(k % 2))
        lam = _data.log_uniform(rng, 0.05, 10)
        rep = evaluate(ds, LogisticLoss(), Ridge(), [lam])
        v, g, h = logistic_ridge_corollary_eval(ds, lam)
        worst_lg = max(worst_lg, rel(rep.value, v), rel(rep.gradient[0], g), rel(rep.hessian[0, 0], h))
    ok = max(worst_sq, worst_lg) <= 1e-10
    acceptance("4", ok, f"generic vs closed-form (50 ridge, 50 logistic-ridge instances): "
                        f"worst diff {worst_sq:.1e} / {worst_lg:.1e} (tol 1e-10)")
    assert ok


# --- 5 ----------------------------------------------------------------------------

def test_factorization_paths_agree(acceptance):
    rng = np.random.default_rng(5)
    shapes = {"n>p": (40, 7), "n=p": (12, 11), "n<p": (10, 25)}  # p excludes the intercept
    worst = {}
    for label, (n, p) in shapes.items():
        w = 0.0
        for k in range(12):
            logistic = k % 2 == 1
            make = _data.classification if logistic else _data.regression
            ds = make(rng, n, p, intercept=True)
            loss = LogisticLoss() if logistic else SquaredLoss()
            reg, lam = _make_family(["ridge", "group3", "bridge"][k % 3], p, rng)
            a = evaluate(ds, loss, reg, lam, path="n_over_p")
            b = evaluate(ds, loss, reg, lam, path="p_over_n")
            for x, y in ((a.value, b.value), (a.gradient, b.gradient), (a.hessian, b.hessian)):
                x, y = np.atleast_1d(x), np.atleast_1d(y)
                w = max(w, float(np.abs(x - y).max() / np.abs(y).max()))
        worst[label] = w
    ok = max(worst.values()) <= 1e-7
    detail = ", ".join(f"{k}: {v:.1e}" for k, v in worst.items())
    acceptance("5", ok, f"n_over_p vs p_over_n with intercept, worst rel diff {detail} (tol 1e-7)")
    assert ok


# --- 6 ----------------------------------------------------------------------------

def test_bridge_smoothing_conditions(acceptance):
    delta = 0.01
    worst = 0.0
    for lam2 in (0.0, 0.5, 0.75, 1.0, 1.5):
        sm = bridge_smoothing_coeffs(lam2, delta)
        m = 1 + lam2**2
        for k in range(5):
            target = np.prod([m - i for i in range(k)]) * delta ** (m - k)
            got = sm.derivative(delta, k)
            err = abs(got - target) / abs(target) if target != 0 else abs(got)
            worst = max(worst, err)
    quad = bridge_smoothing_coeffs(1.0, delta).coeffs
    quad_err = float(np.abs(quad - [1, 0, 0, 0, 0]).max())
    ok = worst <= 1e-10 and quad_err <= 1e-12
    acceptance("6", ok, f"smoothing patch matches |t|^m at delta through 4 derivatives: worst rel err "
                        f"{worst:.1e} (tol 1e-10); m=2 coefficients off by {quad_err:.1e} (tol 1e-12)")
    assert ok


# --- 7 ----------------------------------------------------------------------------

def test_trust_region_beats_grid(acceptance):
    rng = np.random.default_rng(7)
    problems = 20
    grid = log_grid(1e-3, 1e3, 100)
    bad = []
    max_iter = 0
    worst_gap = -np.inf
    for k in range(problems):
        logistic = k % 2 == 1
        n, p = int(rng.integers(30, 80)), int(rng.integers(3, 10))
        if logistic:
            ds, loss = _data.classification(rng, n, p, intercept=True, scale=2.0), LogisticLoss()
        else:
            ds, loss = _data.regression(rng, n, p, intercept=True, noise=3.0), SquaredLoss()
        res = tune(ds, loss, Ridge())
        best = grid_search(ds, loss, Ridge(), grid).best_point.value
        iters = len(res.trace.records)
        gnorm = float(np.max(np.abs(res.gradient)))
        max_iter = max(max_iter, iters)
        worst_gap = max(worst_gap, res.f_star - best)
        if not (res.status == "Converged" and gnorm <= 1e-6 and iters <= 50 and res.f_star <= best + 1e-8):
            bad.append(k)
    ok = not bad
    acceptance("7", ok, f"{problems} ridge problems: {problems - len(bad)} converged to |grad| <= 1e-6 in "
                        f"<= 50 iterations (max {max_iter}) with f* <= grid min + 1e-8 "
                        f"(worst f* - grid min = {worst_gap:.2e})")
    assert ok


# --- 8 ----------------------------------------------------------------------------

def _median_time(fn, reps=9):
    ts = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t0)
    return float(np.median(ts))


def test_complexity_scaling(acceptance):
    rng = np.random.default_rng(8)
    loss = LogisticLoss()
    p = 40
    with threadpool_limits(limits=1):
        times = []
        for n in (4000, 8000):
            ds = _data.classification(rng, n, p, intercept=True)
            reg = GroupRidge(np.arange(p) % 4, n_groups=4)
            lam = np.ones(4)
            st = fit(ds, loss, reg, lam, path="n_over_p")
            times.append(_median_time(lambda: alo_gradient(st, ds, loss, reg, lam)))
        grad_ratio = times[1] / times[0]

        ds = _data.classification(rng, 3000, p, intercept=True)
        times = []
        for q in (4, 8):
            reg = GroupRidge(np.arange(p) % q, n_groups=q)
            lam = np.ones(q)
            st = fit(ds, loss, reg, lam, path="n_over_p")
            _, inter = alo_gradient(st, ds, loss, reg, lam)
            times.append(_median_time(lambda: alo_hessian(st, ds, loss, reg, lam, inter)))
        hess_ratio = times[1] / times[0]

    too_slow = grad_ratio > 3.5 or hess_ratio > 6.0
    too_fast = grad_ratio < 1.5 or hess_ratio < 2.5
    status = False if too_slow else ("INFO" if too_fast else True)
    acceptance("8", status, f"doubling n: gradient time x{grad_ratio:.2f} (band 1.5-3.5); "
                            f"doubling q: hessian time x{hess_ratio:.2f} (band 2.5-6)"
                            + ("; below band is informational only" if too_fast and not too_slow else ""))
    assert not too_slow


# --- 9 (optional) --------------------------------------------------------------------

# (lambda, df, d2f) as displayed; logistic ridge on the breast cancer data
TABLE_RIDGE_LOGISTIC = [
    (0.01, -46.15, 3850.21), (0.05, -2.68, 119.42), (0.10, -0.48, 8.31),
    (1.00, -0.0064, 0.035), (2.00, 0.015, 0.0015), (5.00, 0.015, -0.00041),
]
# (lam1, lam2, df/dl1, df/dl2, d2f/dl1^2, d2f/dl1dl2, d2f/dl2^2)
TABLE_BRIDGE_LOGISTIC = [
    (0.05, 0.75, "-6.07", "-0.78", "146.24", "8.90", "1.04"),
    (0.05, 1.00, "-2.68", "-0.36", "119.42", "10.20", "1.28"),
    (0.05, 1.25, "-0.93", "-0.14", "50.87", "4.35", "0.56"),
    (0.25, 0.75, "-0.39", "-0.13", "-8.55", "-0.99", "0.019"),
    (0.25, 1.00, "-0.18", "-0.059", "0.89", "0.13", "0.088"),
    (0.25, 1.25, "-0.13", "-0.031", "0.82", "0.22", "0.11"),
    (1.00, 0.75, "0.0054", "-0.0077", "0.047", "0.013", "0.032"),
    (1.00, 1.00, "0.0064", "-0.0021", "0.035", "0.0021", "0.020"),
    (1.00, 1.25, "0.0039", "0.00062", "-0.15", "-0.071", "-0.0065"),
]
# ridge regression on the pollution data (lambda, df, d2f)
TABLE_RIDGE_POLLUTION = [
    (0.01, -68.99, -6879.30), (0.05, -33.36, -6195.24), (0.10, -600.79, -4371.80),
    (1.00, -129.64, 137.56), (2.00, -48.68, 65.14), (5.00, 59.95, 18.15),
]


def _display_tol(text):
    """Half a unit in the last displayed digit."""
    decimals = len(text.split(".")[1]) if "." in text else 0
    return 0.5 * 10.0**-decimals


def _matches(exact, shown):
    shown_val = float(shown)
    tol = max(0.01 * abs(shown_val), _display_tol(shown))
    return abs(exact - shown_val) <= tol


def _breast_cancer():
    datasets = pytest.importorskip("sklearn.datasets")
    d = datasets.load_breast_cancer()
    raw = Dataset.from_arrays(d.data, np.where(d.target == 1, 1.0, -1.0), task="classification")
    return attach_intercept(standardize(raw))


def test_optional_published_table_values(acceptance):
    checked, mismatches = 0, []
    ds = _breast_cancer()
    for lam, g, h in TABLE_RIDGE_LOGISTIC:
        rep = evaluate(ds, LogisticLoss(), Ridge(), [lam])
        for name, exact, shown in (("df", rep.gradient[0], g), ("d2f", rep.hessian[0, 0], h)):
            checked += 1
            if not _matches(exact, repr(shown)):
                mismatches.append(f"ridge lam={lam} {name}: {exact:.5g} vs {shown}")
    for l1, l2, *shown in TABLE_BRIDGE_LOGISTIC:
        rep = evaluate(ds, LogisticLoss(), Bridge(), [l1, l2])
        exact = [rep.gradient[0], rep.gradient[1], rep.hessian[0, 0], rep.hessian[0, 1], rep.hessian[1, 1]]
        names = ["df/dl1", "df/dl2", "d2f/dl1dl1", "d2f/dl1dl2", "d2f/dl2dl2"]
        for name, e, s in zip(names, exact, shown):
            checked += 1
            if not _matches(e, s):
                mismatches.append(f"bridge ({l1},{l2}) {name}: {e:.4g} vs {s}")

    pollution = os.environ.get("ALOTUNE_POLLUTION_CSV")
    if pollution:
        pds = attach_intercept(standardize(load_csv(pollution)))
        for lam, g, h in TABLE_RIDGE_POLLUTION:
            rep = evaluate(pds, SquaredLoss(), Ridge(), [lam])
            for name, exact, shown in (("df", rep.gradient[0], g), ("d2f", rep.hessian[0, 0], h)):
                checked += 1
                if not _matches(exact, repr(shown)):
                    mismatches.append(f"pollution lam={lam} {name}: {exact:.5g} vs {shown}")
    note = "" if pollution else "; pollution data not available (set ALOTUNE_POLLUTION_CSV)"
    ok = not mismatches
    acceptance("9", ok if ok else "FAIL (optional)",
               f"{checked - len(mismatches)}/{checked} published entries within max(1%, display rounding)"
               + (": mismatches " + "; ".join(mismatches) if mismatches else "") + note)
    if mismatches:
        pytest.xfail("published tables disagree with independently verified derivatives at "
                     + f"{len(mismatches)} entries (see decisions ledger)")


# --- 10 ---------------------------------------------------------------------------

def test_kfold_bridge_vs_ridge(acceptance):
    rng = np.random.default_rng(10)
    n, p = 500, 50
    X = rng.standard_normal((n, p))
    w = np.zeros(p)
    w[:8] = rng.choice([-1.0, 1.0], 8) * rng.uniform(0.5, 1.5, 8)
    y = np.where(rng.random(n) < 1.0 / (1.0 + np.exp(-X @ w)), 1.0, -1.0)
    raw = Dataset.from_arrays(X, y, task="classification")

    t0 = time.perf_counter()
    bridge = kfold_experiment(raw, LogisticLoss(), Bridge(), k=5, seed=0)
    ridge = kfold_experiment(raw, LogisticLoss(), Ridge(), k=5, seed=0)
    elapsed = time.perf_counter() - t0
    complete = (len(bridge) == 5 and all(r.lam.shape == (2,) and np.isfinite(r.test_error) for r in bridge))
    b_err = float(np.mean([r.test_error for r in bridge]))
    r_err = float(np.mean([r.test_error for r in ridge]))
    ok = complete and b_err <= r_err + 0.01
    acceptance("10", ok, f"5-fold on synthetic n=500, p=50: bridge mean test NLL {b_err:.4f} vs ridge "
                         f"{r_err:.4f} (need bridge <= ridge + 0.01); folds complete: {complete}; {elapsed:.1f}s")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
