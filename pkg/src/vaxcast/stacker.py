"""Blend the clinical and web prediction streams.

Two meta-models over ``(1, clinical, web)``: ordinary least squares, and a
linear support-vector regression with epsilon-insensitive loss and a ridge
penalty.  The SVR problem has three unknowns, so it is solved in the primal:
a smoothed (Huber-type) surrogate is minimized with a shrinking smoothing
width, then the piecewise-quadratic optimum is located exactly on the
active set of residuals sitting on the tube boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import DomainError, EstimationError
from .exog_regress.linear import least_squares
from .series_core import DatedSeries

STACK_COLUMNS = ("intercept", "clinical", "web")


@dataclass(frozen=True)
class SvrParams:
    epsilon: float = 0.1
    lam: float = 1.0
    penalize_intercept: bool = True

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise DomainError("epsilon must be nonnegative")
        if not self.lam > 0:
            raise DomainError("lambda must be positive")

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, "lambda": self.lam, "penalize_intercept": self.penalize_intercept}

    @classmethod
    def from_dict(cls, d: dict) -> "SvrParams":
        return cls(d["epsilon"], d["lambda"], d.get("penalize_intercept", True))


@dataclass(frozen=True)
class StackWeights:
    intercept: float
    clinical_weight: float
    web_weight: float
    method: str = "ols"
    svr_params: SvrParams | None = None
    objective: float | None = None

    def __post_init__(self):
        if self.method not in ("ols", "svr"):
            raise DomainError(f"unknown stacking method {self.method!r}")
        if (self.method == "svr") != (self.svr_params is not None):
            raise DomainError("svr_params must be given exactly when method is 'svr'")
        if not all(math.isfinite(v) for v in self.as_array()):
            raise DomainError("stack weights must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.intercept, self.clinical_weight, self.web_weight])

    def to_dict(self) -> dict:
        d = {
            "method": self.method,
            "intercept": self.intercept,
            "clinical_weight": self.clinical_weight,
            "web_weight": self.web_weight,
        }
        if self.svr_params is not None:
            d["svr_params"] = self.svr_params.to_dict()
        if self.objective is not None:
            d["objective"] = self.objective
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "StackWeights":
        sp = d.get("svr_params")
        return cls(
            d["intercept"],
            d["clinical_weight"],
            d["web_weight"],
            d["method"],
            SvrParams.from_dict(sp) if sp else None,
            d.get("objective"),
        )


CLINICAL_ONLY = StackWeights(0.0, 1.0, 0.0)


def _stack_design(actual, clinical_pred, web_pred, min_len=3):
    series = [s for s in (actual, clinical_pred, web_pred) if s is not None]
    first = series[0]
    for s in series[1:]:
        if not s.same_dates(first):
            raise DomainError(
                f"date mismatch: {first.start_date}..{first.end_date} vs {s.start_date}..{s.end_date}"
            )
    if len(first) < min_len:
        raise DomainError(f"stacking needs at least {min_len} dates")
    A = np.column_stack((np.ones(len(first)), clinical_pred.values, web_pred.values))
    return A, (actual.values if actual is not None else None)


def stack_ols(actual: DatedSeries, clinical_pred: DatedSeries, web_pred: DatedSeries) -> StackWeights:
    """Least-squares weights for ``actual ~ 1 + clinical + web``."""
    A, y = _stack_design(actual, clinical_pred, web_pred)
    w = least_squares(A, y, STACK_COLUMNS)
    return StackWeights(float(w[0]), float(w[1]), float(w[2]), "ols")


def svr_loss(r, params: SvrParams):
    """Epsilon-insensitive loss: zero inside the tube, ``|r| - eps`` outside."""
    a = np.abs(np.asarray(r, dtype=float)) - params.epsilon
    out = np.where(a > 0, a, 0.0)
    return float(out) if out.ndim == 0 else out


def svr_objective(w, A, y, params: SvrParams) -> float:
    w = np.asarray(w, dtype=float)
    pen = w @ w if params.penalize_intercept else w[1:] @ w[1:]
    return float(np.sum(svr_loss(y - A @ w, params)) + 0.5 * params.lam * pen)


def _penalty_diag(params: SvrParams) -> np.ndarray:
    d = np.full(3, params.lam)
    if not params.penalize_intercept:
        d[0] = 0.0
    return d


def _smoothed(w, A, y, eps, delta, pen):
    """Huber-smoothed objective and gradient (quadratic zone of width delta)."""
    r = y - A @ w
    a = np.abs(r) - eps
    quad = (a > 0) & (a <= delta)
    lin = a > delta
    val = np.sum(a[quad] ** 2) / (2 * delta) + np.sum(a[lin] - delta / 2) + 0.5 * np.sum(pen * w * w)
    dl = np.zeros_like(r)
    dl[quad] = a[quad] / delta
    dl[lin] = 1.0
    grad = -A.T @ (dl * np.sign(r)) + pen * w
    return val, grad


def _active_set_polish(w, A, y, params, tol):
    """Exact minimizer for the sign pattern of ``w``'s residuals.

    Residuals within ``tol`` of a tube edge are held on it; the rest
    contribute linearly (outside) or not at all (inside).  Returns the
    candidate, or ``None`` if its KKT multipliers are infeasible.
    """
    eps = params.epsilon
    r = y - A @ w
    a = np.abs(r) - eps
    on_edge = np.abs(a) <= tol
    above = (a > tol) & (r > 0)
    below = (a > tol) & (r < 0)
    H = np.diag(_penalty_diag(params))
    g = -A[above].sum(axis=0) + A[below].sum(axis=0)
    E = A[on_edge]
    target = y[on_edge] - np.sign(r[on_edge]) * eps
    m = E.shape[0]
    K = np.zeros((3 + m, 3 + m))
    K[:3, :3] = H
    K[:3, 3:] = E.T
    K[3:, :3] = E
    rhs = np.concatenate((-g, target))
    sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    cand = sol[:3]
    # subgradient check on the edge multipliers: with eps > 0 a point on the
    # upper edge needs nu in [-1, 0] (mirrored below); with eps = 0 |nu| <= 1
    nu = sol[3:]
    s = np.sign(r[on_edge])
    if eps > 0:
        bad = (s * nu > 1e-9) | (s * nu < -1 - 1e-9)
    else:
        bad = np.abs(nu) > 1 + 1e-9
    if np.any(bad):
        return None
    if not np.allclose(K @ sol, rhs, atol=1e-9 * max(1.0, np.abs(rhs).max(initial=0.0))):
        return None
    return cand


def stack_svr(
    actual: DatedSeries,
    clinical_pred: DatedSeries,
    web_pred: DatedSeries,
    params: SvrParams = SvrParams(),
    init=None,
    tol: float = 1e-8,
) -> StackWeights:
    """Penalized epsilon-insensitive fit of ``actual ~ 1 + clinical + web``.

    The objective is ``sum V(r_t) + lam/2 * |w|^2``; the intercept is in the
    penalty unless ``params.penalize_intercept`` is false.
    """
    A, y = _stack_design(actual, clinical_pred, web_pred)
    pen = _penalty_diag(params)
    w = np.zeros(3) if init is None else np.array(init, dtype=float)
    if w.shape != (3,):
        raise DomainError("init must hold three weights")
    scale = max(float(np.std(y)), float(np.abs(y).max()) * 1e-3, 1e-12)
    f = lambda v: svr_objective(v, A, y, params)
    delta = scale
    while True:
        res = optimize.minimize(
            _smoothed, w, args=(A, y, params.epsilon, delta, pen), jac=True, method="BFGS",
            options={"gtol": 1e-12 * max(1.0, len(y)), "maxiter": 2000},
        )
        if np.all(np.isfinite(res.x)):
            w = res.x
        if delta < 0.1 * tol * scale:
            break
        delta *= 0.1
    best, best_f = w, f(w)
    # polish: try edge tolerances from loose to tight, keep the best KKT point
    for edge_tol in (1e-3, 1e-5, 1e-7, 1e-9):
        cand = _active_set_polish(best, A, y, params, edge_tol * scale)
        if cand is not None:
            fc = f(cand)
            if fc <= best_f:
                best, best_f = cand, fc
    if not np.all(np.isfinite(best)):
        raise EstimationError("SVR stacking diverged", last_iterate=best)
    if params.penalize_intercept is False and not np.isfinite(best_f):
        raise EstimationError("SVR objective unbounded", last_iterate=best)
    return StackWeights(float(best[0]), float(best[1]), float(best[2]), "svr", params, best_f)


def stack_predict(weights: StackWeights, clinical_pred: DatedSeries, web_pred: DatedSeries) -> DatedSeries:
    """``intercept + clinical_weight * clinical + web_weight * web``."""
    if not clinical_pred.same_dates(web_pred):
        raise DomainError("clinical and web predictions cover different dates")
    vals = weights.intercept + weights.clinical_weight * clinical_pred.values + weights.web_weight * web_pred.values
    return clinical_pred.with_values(vals, name="stacked")
