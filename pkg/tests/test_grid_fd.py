import numpy as np
import pytest

from alotune import (
    Bridge,
    FoldAssignment,
    LogisticLoss,
    Ridge,
    SquaredLoss,
    alo_value,
    emit_fd_table,
    evaluate,
    fd_gradient,
    fd_hessian,
    fit,
    grid_search,
    kfold_cv_loss,
    log_grid,
    make_folds,
    tune,
)
from alotune.experiments import bench, curve, kfold_experiment
from alotune.fd import floored_rel_error
from alotune.solver import NumericalError

import _data


# --- finite differences -----------------------------------------------------------

def test_forward_difference_algebra():
    assert fd_gradient(lambda x: x[0] ** 2, [1.0])[0] == pytest.approx(2.000001, abs=1e-9)


def test_forward_difference_of_constant():
    np.testing.assert_array_equal(fd_gradient(lambda x: 3.0, [1.0, 2.0]), 0.0)
    np.testing.assert_array_equal(fd_hessian(lambda x: np.array([1.0, -1.0]), [1.0, 2.0]), 0.0)


def test_hessian_of_quadratic():
    np.testing.assert_allclose(fd_hessian(lambda x: 2 * x, [0.3, -0.7]), 2 * np.eye(2), atol=1e-9)


def test_bad_step():
    with pytest.raises(ValueError):
        fd_gradient(lambda x: 0.0, [1.0], step=0.0)
    with pytest.raises(ValueError):
        fd_hessian(lambda x: x, [1.0], step=-1.0)
    with pytest.raises(ValueError, match="scheme"):
        fd_hessian(lambda x: x, [1.0], scheme="backward")


def test_floored_relative_error():
    np.testing.assert_allclose(floored_rel_error([0.5, 100.0], [0.6, 101.0]), [0.1, 0.01])


def test_fd_gradient_matches_exact_ridge():
    rng = np.random.default_rng(0)
    ds = _data.regression(rng, 25, 4, intercept=True)
    lam = np.array([0.7])
    exact = evaluate(ds, SquaredLoss(), Ridge(), lam, order=1).gradient
    approx = fd_gradient(lambda x: evaluate(ds, SquaredLoss(), Ridge(), x, order=0).value, lam)
    assert floored_rel_error(exact, approx).max() <= 1e-4


def test_fd_hessian_matches_exact_logistic():
    rng = np.random.default_rng(1)
    ds = _data.classification(rng, 40, 4, intercept=True)
    lam = np.array([0.5])
    exact = evaluate(ds, LogisticLoss(), Ridge(), lam).hessian
    approx = fd_hessian(lambda x: evaluate(ds, LogisticLoss(), Ridge(), x, order=1).gradient, lam)
    assert floored_rel_error(exact, approx).max() <= 1e-4


def test_fd_table_ridge_grid():
    rng = np.random.default_rng(2)
    ds = _data.regression(rng, 60, 15, intercept=True)
    report = emit_fd_table(ds, SquaredLoss(), Ridge(), [5, 0.01, 0.05, 0.1, 1, 2])
    assert len(report.rows) == 12
    assert {r.lam for r in report.rows} == {(v,) for v in (0.01, 0.05, 0.1, 1.0, 2.0, 5.0)}
    assert [r.lam[0] for r in report.rows] == sorted(r.lam[0] for r in report.rows)
    assert report.worst_rel_error <= 1e-3 and not report.any_failed


def test_fd_table_single_point_and_output():
    rng = np.random.default_rng(3)
    ds = _data.classification(rng, 40, 3, intercept=True)
    report = emit_fd_table(ds, LogisticLoss(), Bridge(), [[1.0, 0.9]])
    assert [r.quantity for r in report.rows] == [
        "df/dlam1", "df/dlam2", "d2f/dlam1dlam1", "d2f/dlam1dlam2", "d2f/dlam2dlam2"]
    csv_text = report.to_csv().splitlines()
    assert csv_text[0] == "lambda1,lambda2,quantity,exact,approx,rel_error,failed"
    assert len(csv_text) == 6
    assert "df/dlam1" in report.to_text()


def test_fd_table_records_failures():
    Q, _ = np.linalg.qr(np.random.default_rng(4).standard_normal((5, 5)))
    from alotune import Dataset
    ds = Dataset.from_arrays(Q, np.arange(5.0))
    report = emit_fd_table(ds, SquaredLoss(), Ridge(), [0.0, 1.0])
    assert report.any_failed
    assert sum(r.failed for r in report.rows) == 2
    assert np.isfinite(report.worst_rel_error)


# --- grid search --------------------------------------------------------------------

def test_log_grid():
    axes = log_grid(1e-2, 1e2, 5, dims=2)
    assert len(axes) == 2
    np.testing.assert_allclose(axes[0], [1e-2, 1e-1, 1, 10, 100])
    with pytest.raises(ValueError):
        log_grid(0.0, 1.0, 3)


def test_singleton_grid_equals_alo_value():
    rng = np.random.default_rng(5)
    ds = _data.regression(rng, 20, 3)
    res = grid_search(ds, SquaredLoss(), Ridge(), [[0.4]])
    state = fit(ds, SquaredLoss(), Ridge(), [0.4])
    assert res.best == 0
    assert res.best_point.value == alo_value(state, SquaredLoss(), ds.responses)


def test_bridge_grid_cardinality():
    rng = np.random.default_rng(6)
    ds = _data.classification(rng, 40, 3, intercept=True)
    res = grid_search(ds, LogisticLoss(), Bridge(), log_grid(0.1, 10, 5, dims=2))
    assert len(res.points) == 25
    vals = [pt.value for pt in res.points if not pt.failed]
    assert res.best_point.value == min(vals)


def test_grid_ties_go_to_smaller_lambda():
    from alotune import Dataset
    ds = Dataset.from_arrays(np.random.default_rng(7).standard_normal((6, 2)), np.zeros(6))
    res = grid_search(ds, SquaredLoss(), Ridge(), [[3.0, 1.0, 2.0]])
    assert res.best_point.lam[0] == 1.0


def test_grid_validation():
    rng = np.random.default_rng(8)
    ds = _data.regression(rng, 10, 2)
    with pytest.raises(ValueError):
        grid_search(ds, SquaredLoss(), Ridge(), [[1.0], [1.0]])
    with pytest.raises(ValueError):
        grid_search(ds, SquaredLoss(), Ridge(), [[]])
    with pytest.raises(ValueError):
        grid_search(ds, SquaredLoss(), Ridge(), [[1.0]], criterion="AIC")
    with pytest.raises(ValueError):
        grid_search(ds, SquaredLoss(), Ridge(), [[1.0]], criterion="KFoldCV")


def test_grid_flags_failed_points():
    Q, _ = np.linalg.qr(np.random.default_rng(9).standard_normal((5, 5)))
    from alotune import Dataset
    ds = Dataset.from_arrays(Q, np.arange(5.0))
    res = grid_search(ds, SquaredLoss(), Ridge(), [[0.0, 1.0]])
    assert res.points[0].failed and not res.points[1].failed and res.best == 1
    with pytest.raises(NumericalError):
        grid_search(ds, SquaredLoss(), Ridge(), [[0.0]])


def test_kfold_invariant_to_relabeling():
    rng = np.random.default_rng(10)
    ds = _data.classification(rng, 30, 3, intercept=True)
    folds = make_folds(30, 3, seed=1)
    relabeled = FoldAssignment((folds.fold_of + 1) % 3, 3)
    a = kfold_cv_loss(ds, LogisticLoss(), Ridge(), [0.5], folds)
    b = kfold_cv_loss(ds, LogisticLoss(), Ridge(), [0.5], relabeled)
    assert a == pytest.approx(b, rel=1e-12)
    res = grid_search(ds, LogisticLoss(), Ridge(), [[0.5, 2.0]], "KFoldCV", folds)
    assert res.criterion == "KFoldCV" and res.points[0].value == pytest.approx(a, rel=1e-12)


def test_grid_never_beats_tuned_optimum():
    rng = np.random.default_rng(11)
    ds = _data.regression(rng, 50, 8, intercept=True, noise=3.0)
    grid = grid_search(ds, SquaredLoss(), Ridge(), log_grid(1e-3, 1e3, 100))
    assert grid.best_point.value >= tune(ds, SquaredLoss(), Ridge()).f_star - 1e-8


# --- experiment workflows -------------------------------------------------------------

def test_curve_shape():
    rng = np.random.default_rng(12)
    ds = _data.regression(rng, 20, 3)
    data = curve(ds, SquaredLoss(), Ridge(), log_grid(1e-3, 1e3, 50)[0])
    assert data.shape == (50, 4) and np.all(np.isfinite(data))
    with pytest.raises(ValueError):
        curve(ds, SquaredLoss(), Bridge(), [1.0])


def test_curve_minimum_agrees_with_tune():
    rng = np.random.default_rng(13)
    ds = _data.regression(rng, 30, 4, intercept=True, noise=2.0)
    res = tune(ds, SquaredLoss(), Ridge())
    lam = res.lambda_star[0]
    data = curve(ds, SquaredLoss(), Ridge(), np.geomspace(lam / 1.01, lam * 1.01, 41))
    assert res.f_star <= data[:, 1].min() + 1e-12
    assert data[20, 1] == pytest.approx(res.f_star, abs=1e-8)


def test_kfold_experiment():
    rng = np.random.default_rng(14)
    raw = _data.classification(rng, 80, 4)
    out = kfold_experiment(raw, LogisticLoss(), Ridge(), k=4, seed=0)
    assert [r.fold for r in out] == [0, 1, 2, 3]
    assert all(r.status == "Converged" and r.test_error > 0 for r in out)


def test_bench_rows():
    rng = np.random.default_rng(15)
    ds = _data.regression(rng, 30, 3, intercept=True)
    out = bench(ds, SquaredLoss(), Ridge(), repeats=2, grid_points=5)
    assert [b.method for b in out] == ["trust_region", "grid"]
    assert all(b.mean_seconds > 0 for b in out)
    with pytest.raises(ValueError):
        bench(ds, SquaredLoss(), Ridge(), repeats=0)


def test_fd_hessian_central_is_second_order():
    # gradient of sum(x**3): exact hessian diag(6x)
    grad = lambda x: 3 * x**2
    x = np.array([0.5, -1.2])
    fwd = fd_hessian(grad, x, step=1e-3)
    cen = fd_hessian(grad, x, step=1e-3, scheme="central")
    np.testing.assert_allclose(cen, np.diag(6 * x), atol=1e-10)
    assert np.abs(fwd - np.diag(6 * x)).max() > 1e-4
