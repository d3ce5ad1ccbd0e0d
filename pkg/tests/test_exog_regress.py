import datetime as dt
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vaxcast.errors import DomainError, RankError
from vaxcast.exog_regress import (
    FeatureMatrix,
    LinearModel,
    TreeEnsembleModel,
    build_design,
    build_features,
    cross_validate,
    fit_boost,
    fit_lasso,
    fit_ols,
    fit_rf,
    fold_indices,
    grow_tree,
    lasso_lambda_grid,
    lasso_lambda_max,
    lasso_standardized,
    model_from_dict,
    predict,
    predict_values,
)

from conftest import START, series


def matrix(rows, names=None, start=START):
    rows = np.asarray(rows, dtype=float)
    names = names or tuple(f"x{j}" for j in range(rows.shape[1]))
    return FeatureMatrix(tuple(start + dt.timedelta(days=i) for i in range(rows.shape[0])), names, rows)


def random_problem(seed, n=200, k=6, noise=0.1):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, k))
    beta = rng.uniform(-2, 2, k)
    y = 0.7 + X @ beta + noise * rng.standard_normal(n)
    return matrix(X), y, beta


# ---- design


def test_build_features_shapes():
    rng = np.random.default_rng(0)
    att = [series(rng.random(10), n) for n in ("pt", "nt", "ng")]
    X = build_features(att, lag=1)
    assert (X.n_rows, X.n_cols) == (9, 6)
    assert X.column_names == ("pt", "nt", "ng", "pt_lag1", "nt_lag1", "ng_lag1")
    assert X.rows[0, 3] == att[0].values[0] and X.rows[0, 0] == att[0].values[1]
    X0 = build_features(att, lag=0)
    assert (X0.n_rows, X0.n_cols) == (10, 3)


def test_constant_attitude_warns_and_ols_rank_error():
    rng = np.random.default_rng(1)
    att = [series(rng.random(30), "pt"), series(np.full(30, 2.0), "nt"), series(rng.random(30), "ng")]
    with pytest.warns(UserWarning, match="nt"):
        X, y = build_design(att, series(rng.random(30), "ratio"), lag=1)
    assert "nt" in X.column_names
    with pytest.raises(RankError):
        fit_ols(X, y)


def test_feature_csv_round_trip(tmp_path):
    X, _, _ = random_problem(2, n=5, k=3)
    X.to_csv(tmp_path / "f.csv")
    assert FeatureMatrix.from_csv(tmp_path / "f.csv") == X


# ---- OLS


def test_ols_interpolates_exact_linear():
    X, _, beta = random_problem(3)
    y = 0.7 + X.rows @ beta
    m = fit_ols(X, y)
    assert np.max(np.abs(predict_values(m, X) - y)) < 1e-9


def test_ols_matches_normal_equations_and_truth():
    X, y, beta = random_problem(4)
    m = fit_ols(X, y)
    A = np.column_stack([np.ones(X.n_rows), X.rows])
    ref = np.linalg.solve(A.T @ A, A.T @ y)
    assert np.allclose(np.r_[m.intercept, m.weights], ref, atol=1e-8)
    assert np.all(np.abs(m.weights - beta) < 0.05)


def test_ols_residuals_orthogonal():
    X, y, _ = random_problem(5)
    r = y - predict_values(fit_ols(X, y), X)
    A = np.column_stack([np.ones(X.n_rows), X.rows])
    assert np.all(np.abs(A.T @ r) < 1e-8)


def test_ols_duplicate_column_names_dependency():
    X, y, _ = random_problem(6, k=3)
    Xd = matrix(np.column_stack([X.rows, X.rows[:, 1]]), ("a", "b", "c", "b2"))
    with pytest.raises(RankError) as info:
        fit_ols(Xd, y)
    assert set(info.value.columns) == {"b", "b2"}


# ---- LASSO


def test_lasso_zero_penalty_is_ols():
    X, y, _ = random_problem(7)
    a, b = fit_lasso(X, y, 0.0), fit_ols(X, y)
    assert np.allclose(a.weights, b.weights, atol=1e-6)
    assert a.intercept == pytest.approx(b.intercept, abs=1e-6)


def test_lasso_lambda_max_gives_zero_model():
    X, y, _ = random_problem(8)
    lmax = lasso_lambda_max(X, y)
    Z = (X.rows - X.rows.mean(0)) / X.rows.std(0)
    assert lmax == pytest.approx(np.max(np.abs(Z.T @ (y - y.mean()))) / X.n_rows, rel=1e-14)
    for lam in (lmax, 2 * lmax):
        m = fit_lasso(X, y, lam)
        assert np.all(m.weights == 0.0)
        assert m.intercept == y.mean()
    assert np.any(fit_lasso(X, y, 0.99 * lmax).weights != 0)


def kkt_violation(m, X, y):
    Z = (X.rows - X.rows.mean(0)) / X.rows.std(0)
    b = lasso_standardized(m, X)
    r = y - predict_values(m, X)
    g = Z.T @ r / X.n_rows
    lam = m.regularization
    active = b != 0
    worst = 0.0
    if active.any():
        worst = max(worst, float(np.max(np.abs(g[active] - lam * np.sign(b[active])))))
    if (~active).any():
        worst = max(worst, float(np.max(np.abs(g[~active]) - lam)))
    return worst


@pytest.mark.parametrize("seed", range(5))
def test_lasso_kkt(seed):
    X, y, _ = random_problem(100 + seed, n=80, k=10, noise=0.5)
    lmax = lasso_lambda_max(X, y)
    for frac in (0.5, 0.1, 0.01):
        assert kkt_violation(fit_lasso(X, y, frac * lmax), X, y) <= 1e-6


def test_lasso_matches_sklearn():
    from sklearn.linear_model import Lasso

    X, y, _ = random_problem(9, n=100, k=8, noise=0.5)
    lam = 0.05 * lasso_lambda_max(X, y)
    m = fit_lasso(X, y, lam)
    Z = (X.rows - X.rows.mean(0)) / X.rows.std(0)
    ref = Lasso(alpha=lam, tol=1e-14, max_iter=100_000).fit(Z, y)
    assert np.allclose(lasso_standardized(m, X), ref.coef_, atol=1e-8)


def test_lambda_grid_shape():
    X, y, _ = random_problem(10)
    g = lasso_lambda_grid(X, y)
    assert len(g) == 50
    assert g[0] == pytest.approx(lasso_lambda_max(X, y))
    assert g[-1] == pytest.approx(1e-4 * g[0])
    assert all(a > b for a, b in zip(g, g[1:]))


# ---- trees


def test_tree_split_ties_lowest_column_then_threshold():
    X = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0]])
    t = grow_tree(X, np.array([0.0, 0.0, 1.0, 1.0]), max_depth=1)
    assert t.feature[0] == 0 and t.threshold[0] == 0.5


def test_single_boost_tree_equals_tree():
    X, y, _ = random_problem(11, n=60, k=3)
    m = fit_boost(X, y, n_trees=1, max_depth=None, learning_rate=1.0)
    t = grow_tree(X.rows, y - y.mean(), None, 1)
    assert np.allclose(predict_values(m, X), y.mean() + t.predict_values(X.rows), atol=1e-12)
    assert np.mean((predict_values(m, X) - y) ** 2) <= np.var(y)


def test_boost_training_mse_non_increasing():
    X, y, _ = random_problem(12, n=100, k=4, noise=1.0)
    m = fit_boost(X, y, n_trees=200)
    mse = np.mean((m.staged_predict_values(X.rows) - y) ** 2, axis=1)
    assert np.all(np.diff(mse) <= 0)


def test_boost_step_function():
    rng = np.random.default_rng(13)
    x = rng.uniform(-1, 1, (200, 2))
    y = np.where(x[:, 0] > 0.1, 3.0, -1.0)
    X = matrix(x)
    m = fit_boost(X, y, n_trees=50, max_depth=1, learning_rate=1.0)
    rmse = math.sqrt(np.mean((predict_values(m, X) - y) ** 2))
    assert rmse < 0.05 * np.std(y)


def test_forest_degenerates_to_tree():
    X, y, _ = random_problem(14, n=50, k=3)
    m = fit_rf(X, y, n_trees=1, bootstrap=False, mtry=3, min_leaf=1)
    assert np.allclose(predict_values(m, X), y, atol=1e-12)


def friedman(seed, n):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 1, (n, 5))
    y = 10 * np.sin(np.pi * x[:, 0] * x[:, 1]) + 20 * (x[:, 2] - 0.5) ** 2 + 10 * x[:, 3] + 5 * x[:, 4]
    return x, y + rng.standard_normal(n)


def test_forest_beats_ols_on_nonlinear_fixture():
    x, y = friedman(15, 600)
    tr, te = slice(0, 400), slice(400, 600)
    y_sq = y ** 2 / 10
    Xtr, Xte = matrix(x[tr]), matrix(x[te])
    rf = fit_rf(Xtr, y_sq[tr], n_trees=200, min_leaf=3, mtry=3)
    ols = fit_ols(Xtr, y_sq[tr])
    err = lambda m: math.sqrt(np.mean((predict_values(m, Xte) - y_sq[te]) ** 2))
    assert err(rf) <= 0.8 * err(ols)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_forest_bounds_and_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    X = matrix(rng.standard_normal((40, 3)))
    y = rng.standard_normal(40) * 5
    m = fit_rf(X, y, n_trees=20, min_leaf=2, seed=seed)
    grid = matrix(rng.standard_normal((30, 3)) * 3)
    p = predict_values(m, grid)
    assert np.all(p >= y.min()) and np.all(p <= y.max())
    perm = TreeEnsembleModel(m.kind, [m.trees[i] for i in rng.permutation(20)], m.column_names)
    assert np.array_equal(predict_values(perm, grid), p)


def test_learners_deterministic_and_thread_invariant():
    X, y, _ = random_problem(16, n=80, k=4)
    a = fit_rf(X, y, n_trees=30, seed=3)
    b = fit_rf(X, y, n_trees=30, seed=3, n_jobs=3)
    assert a.to_dict() == b.to_dict()
    assert fit_boost(X, y, n_trees=20, subsample=0.7, seed=2).to_dict() == fit_boost(X, y, n_trees=20, subsample=0.7, seed=2).to_dict()


def test_two_tree_ensemble_by_hand():
    X, y, _ = random_problem(17, n=30, k=2)
    m = fit_boost(X, y, n_trees=2, max_depth=1, learning_rate=0.5)
    x = X.rows[7]

    def walk(d):
        while "leaf" not in d:
            d = d["left"] if x[d["column"]] <= d["threshold"] else d["right"]
        return d["leaf"]

    hand = m.base_prediction + 0.5 * sum(walk(t.to_dict()) for t in m.trees)
    assert predict_values(m, X)[7] == pytest.approx(hand, abs=1e-12)


def test_model_serialization_round_trip():
    X, y, _ = random_problem(18, n=60, k=3)
    for m in (fit_ols(X, y), fit_lasso(X, y, 0.01), fit_boost(X, y, n_trees=5), fit_rf(X, y, n_trees=5)):
        back = model_from_dict(m.to_dict())
        assert np.array_equal(predict_values(back, X), predict_values(m, X))


# ---- validation / prediction


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 15), st.integers(0, 40))
def test_fold_sizes(k, extra):
    n = k + extra
    folds = fold_indices(n, k)
    sizes = [f.size for f in folds]
    assert max(sizes) - min(sizes) <= 1
    assert np.array_equal(np.concatenate(folds), np.arange(n))


def test_cv_singleton_grid():
    X, y, _ = random_problem(19, n=50, k=3)
    rep = cross_validate(X, y, fit_lasso, [{"lam": 0.1}], k=5)
    assert rep.chosen == 0


def test_cv_lasso_choice_is_grid_argmin():
    rng = np.random.default_rng(20)
    x = rng.standard_normal((200, 10))
    y = x[:, :3] @ [1.5, -2.0, 1.0] + 0.5 * rng.standard_normal(200)
    X = matrix(x)
    grid = [{"lam": lam} for lam in lasso_lambda_grid(X, y)]
    rep = cross_validate(X, y, fit_lasso, grid, k=10)
    # brute force: refit every setting on every fold independently
    folds = fold_indices(200, 10)
    brute = []
    for g in grid:
        errs = []
        for te in folds:
            tr = np.setdiff1d(np.arange(200), te)
            m = fit_lasso(X.take(tr), y[tr], **g)
            errs.append(math.sqrt(np.mean((predict_values(m, X.take(te)) - y[te]) ** 2)))
        brute.append(np.mean(errs))
    assert abs(rep.chosen - int(np.argmin(brute))) <= 1


def test_predict_constant_model():
    X, _, _ = random_problem(21, n=5, k=2)
    m = LinearModel(3.5, np.zeros(2), X.column_names)
    p = predict(m, X)
    assert np.all(p.values == 3.5) and p.start_date == X.dates[0]


def test_predict_column_mismatch():
    X, y, _ = random_problem(22, n=20, k=2)
    m = fit_ols(X, y)
    with pytest.raises(DomainError):
        predict(m, matrix(X.rows, ("a", "b")))
