import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize

from vaxcast.errors import DomainError, RankError
from vaxcast.stacker import (
    CLINICAL_ONLY,
    StackWeights,
    SvrParams,
    stack_ols,
    stack_predict,
    stack_svr,
    svr_loss,
    svr_objective,
)

from conftest import series


def fixture(seed, n=10):
    rng = np.random.default_rng(seed)
    truth = rng.uniform(0, 2, n)
    clin = truth + 0.3 * rng.standard_normal(n)
    web = truth + 0.3 * rng.standard_normal(n)
    return series(truth, "ratio"), series(clin, "clin"), series(web, "web")


def design(c, w):
    return np.column_stack([np.ones(len(c)), c.values, w.values])


# ---- OLS stacking


def test_stack_ols_recovers_clinical_when_exact():
    rng = np.random.default_rng(0)
    y = rng.standard_normal(50)
    noise = rng.standard_normal(50)
    A = np.column_stack([np.ones(50), y])
    noise -= A @ np.linalg.lstsq(A, noise, rcond=None)[0]
    w = stack_ols(series(y), series(y), series(noise))
    assert w.clinical_weight == pytest.approx(1, abs=1e-6)
    assert w.web_weight == pytest.approx(0, abs=1e-6)
    assert w.intercept == pytest.approx(0, abs=1e-6)


def test_stack_ols_collinear():
    y, c, _ = fixture(1)
    with pytest.raises(RankError):
        stack_ols(y, c, c)


def test_stack_ols_normal_equations():
    y, c, w = fixture(2, n=5)
    A = design(c, w)
    ref = np.linalg.solve(A.T @ A, A.T @ y.values)
    assert np.allclose(stack_ols(y, c, w).as_array(), ref, atol=1e-10)


def test_stack_date_mismatch():
    y, c, w = fixture(3)
    shifted = series(w.values, start=w.start_date + (w.dates[1] - w.dates[0]))
    with pytest.raises(DomainError):
        stack_ols(y, c, shifted)


# ---- loss


def test_svr_loss_examples():
    p = SvrParams(0.2, 1.0)
    assert svr_loss(0.0, p) == 0
    assert svr_loss(0.5, p) == pytest.approx(0.3)
    assert svr_loss(-0.5, p) == pytest.approx(0.3)
    assert svr_loss(0.2, p) == 0 and svr_loss(0.2 + 1e-12, p) == pytest.approx(1e-12, abs=1e-15)


# ---- SVR stacking


def grid_oracle(A, y, params, step=1e-3):
    """Coarse-to-fine grid over [-2, 2]^3, then a local simplex polish."""
    f = lambda v: svr_objective(v, A, y, params)
    center, half, h = np.zeros(3), 2.0, 0.05
    while h >= step:
        axes = [np.arange(c - half, c + half + h / 2, h) for c in center]
        best = min(itertools.product(*axes), key=f)
        center, half, h = np.array(best), 2 * h, h / 5
    starts = [center] + [center + d for d in 1e-3 * np.eye(3)]
    res = min(
        (optimize.minimize(f, s, method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 20000})
         for s in starts),
        key=lambda r: r.fun,
    )
    return res.fun


@pytest.mark.parametrize("eps,lam", [(0.1, 1.0), (0.05, 0.2), (0.0, 0.5)])
def test_svr_matches_grid_oracle(eps, lam):
    y, c, w = fixture(4)
    params = SvrParams(eps, lam)
    fit = stack_svr(y, c, w, params)
    oracle = grid_oracle(design(c, w), y.values, params)
    assert fit.objective <= oracle + 1e-6


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31))
def test_svr_initialization_independent(seed):
    y, c, w = fixture(5)
    params = SvrParams(0.1, 1.0)
    rng = np.random.default_rng(seed)
    ref = stack_svr(y, c, w, params)
    other = stack_svr(y, c, w, params, init=rng.uniform(-5, 5, 3))
    assert abs(other.objective - ref.objective) < 1e-6
    assert np.allclose(other.as_array(), ref.as_array(), atol=1e-6)


def test_svr_huge_penalty_zero_weights():
    y, c, w = fixture(6)
    fit = stack_svr(y, c, w, SvrParams(0.1, 1e9))
    assert np.all(np.abs(fit.as_array()) < 1e-6)


def test_svr_all_in_tube():
    y, c, w = fixture(7)
    eps = np.abs(y.values).max() + 1.0
    fit = stack_svr(y, c, w, SvrParams(eps, 1e-3))
    assert np.all(np.abs(fit.as_array()) < 1e-6)
    assert fit.objective == pytest.approx(0.5e-3 * fit.as_array() @ fit.as_array(), abs=1e-12)


def test_svr_lad_limit():
    y, c, w = fixture(8, n=20)
    A, t = design(c, w), y.values
    n = len(t)
    # LAD as a linear program: min sum(u+ + u-) s.t. A b + u+ - u- = y
    cost = np.r_[np.zeros(3), np.ones(2 * n)]
    eq = np.hstack([A, np.eye(n), -np.eye(n)])
    bounds = [(None, None)] * 3 + [(0, None)] * (2 * n)
    lp = optimize.linprog(cost, A_eq=eq, b_eq=t, bounds=bounds, method="highs")
    fit = stack_svr(y, c, w, SvrParams(0.0, 1e-9))
    assert fit.objective == pytest.approx(lp.fun, abs=1e-4)


def test_svr_unpenalized_intercept():
    y, c, w = fixture(9)
    params = SvrParams(0.05, 0.5, penalize_intercept=False)
    fit = stack_svr(y, c, w, params)
    assert fit.objective <= grid_oracle(design(c, w), y.values, params) + 1e-6


def test_weights_round_trip():
    y, c, w = fixture(10)
    fit = stack_svr(y, c, w)
    assert StackWeights.from_dict(fit.to_dict()) == fit
    assert SvrParams.from_dict(fit.svr_params.to_dict()) == fit.svr_params


# ---- prediction / dominance


def test_stack_predict_and_clinical_only():
    _, c, w = fixture(11)
    p = stack_predict(StackWeights(0.5, 2.0, -1.0), c, w)
    assert np.allclose(p.values, 0.5 + 2 * c.values - w.values)
    assert np.array_equal(stack_predict(CLINICAL_ONLY, c, w).values, c.values)


@pytest.mark.parametrize("seed", range(5))
def test_ols_stack_dominates_bases_in_sample(seed):
    y, c, w = fixture(100 + seed, n=40)
    rmse = lambda p: np.sqrt(np.mean((p - y.values) ** 2))
    stacked = stack_predict(stack_ols(y, c, w), c, w).values
    assert rmse(stacked) <= min(rmse(c.values), rmse(w.values))
