"""OLS by pivoted QR and LASSO by cyclic coordinate descent."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import linalg

from ..errors import DomainError, EstimationError, RankError
from .design import FeatureMatrix, as_targets

RANK_TOL = 1e-10


@dataclass
class LinearModel:
    intercept: float
    weights: np.ndarray
    column_names: tuple
    regularization: float = 0.0
    method: str = "ols"

    def to_dict(self) -> dict:
        return {
            "type": "linear",
            "method": self.method,
            "intercept": float(self.intercept),
            "regularization": float(self.regularization),
            "weights": {n: float(w) for n, w in zip(self.column_names, self.weights)},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LinearModel":
        names = tuple(d["weights"])
        return cls(
            intercept=d["intercept"],
            weights=np.array([d["weights"][n] for n in names], dtype=float),
            column_names=names,
            regularization=d.get("regularization", 0.0),
            method=d.get("method", "ols"),
        )

    def predict_values(self, rows: np.ndarray) -> np.ndarray:
        return self.intercept + rows @ self.weights


def least_squares(A: np.ndarray, y: np.ndarray, names) -> np.ndarray:
    """Solve ``min |y - A b|`` by column-pivoted QR.

    Raises :class:`RankError` naming every column involved in a linear
    dependency.
    """
    n, k = A.shape
    if n < k:
        raise DomainError(f"{n} rows cannot identify {k} coefficients")
    Q, R, piv = linalg.qr(A, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    rank = int(np.sum(d > RANK_TOL * max(d[0], 1e-300)))
    if rank < k:
        # null-space directions: R11 z = R12 for the trailing pivots
        z = linalg.solve_triangular(R[:rank, :rank], R[:rank, rank:]) if rank else np.zeros((0, k))
        involved = set(int(piv[j]) for j in range(rank, k))
        if rank:
            scale = np.abs(z).max(axis=1, initial=0.0)
            for i in np.flatnonzero(scale > 1e-8):
                involved.add(int(piv[i]))
        cols = [names[i] for i in sorted(involved)]
        raise RankError(
            f"design is rank deficient (rank {rank} < {k}); dependent columns: {', '.join(cols)}",
            cols,
        )
    b = linalg.solve_triangular(R, Q.T @ y)
    out = np.empty(k)
    out[piv] = b
    return out


def fit_ols(X: FeatureMatrix, y) -> LinearModel:
    """Ordinary least squares with an intercept."""
    t = as_targets(y, X)
    if X.n_rows < X.n_cols + 1:
        raise DomainError("OLS needs at least one more row than columns")
    A = np.column_stack((np.ones(X.n_rows), X.rows))
    b = least_squares(A, t, ("intercept",) + X.column_names)
    return LinearModel(float(b[0]), b[1:], X.column_names, 0.0, "ols")


def _standardize(rows: np.ndarray):
    mean = rows.mean(axis=0)
    sd = rows.std(axis=0)
    active = sd > 0
    Z = np.zeros_like(rows)
    Z[:, active] = (rows[:, active] - mean[active]) / sd[active]
    return Z, mean, sd, active


@njit(cache=True)
def _coordinate_descent(G, c, lam, b, tol, max_sweeps):
    k = b.size
    for sweep in range(1, max_sweeps + 1):
        biggest = 0.0
        for j in range(k):
            if G[j, j] == 0.0:
                continue
            rho = c[j]
            for m in range(k):
                if m != j:
                    rho -= G[j, m] * b[m]
            if rho > lam:
                new = (rho - lam) / G[j, j]
            elif rho < -lam:
                new = (rho + lam) / G[j, j]
            else:
                new = 0.0
            delta = abs(new - b[j])
            if delta > biggest:
                biggest = delta
            b[j] = new
        if biggest < tol:
            return b, sweep, True
    return b, max_sweeps, False


def lasso_lambda_max(X: FeatureMatrix, y) -> float:
    """Smallest penalty at which every standardized weight is zero."""
    t = as_targets(y, X)
    Z, *_ = _standardize(X.rows)
    return float(np.max(np.abs(Z.T @ (t - t.mean()))) / X.n_rows)


def lasso_lambda_grid(X: FeatureMatrix, y, n: int = 50, ratio: float = 1e-4) -> list[float]:
    """Log-spaced penalties from ``lambda_max`` down to ``ratio * lambda_max``."""
    top = lasso_lambda_max(X, y)
    if top == 0:
        return [0.0]
    return [float(v) for v in np.geomspace(top, top * ratio, n)]


def fit_lasso(X: FeatureMatrix, y, lam: float, tol: float = 1e-13, max_sweeps: int = 1_000_000) -> LinearModel:
    """Minimize ``(1/2n)|y - a - Z b|^2 + lam |b|_1`` on standardized columns.

    Weights are reported on the original column scale; the intercept is
    never penalized.  Constant columns get weight zero.
    """
    if lam < 0:
        raise DomainError("lambda must be nonnegative")
    t = as_targets(y, X)
    if X.n_rows < X.n_cols + 1:
        raise DomainError("LASSO needs at least one more row than columns")
    Z, mean, sd, active = _standardize(X.rows)
    n = X.n_rows
    G = Z.T @ Z / n
    c = Z.T @ (t - t.mean()) / n
    b, sweeps, ok = _coordinate_descent(G, c, float(lam), np.zeros(X.n_cols), tol, max_sweeps)
    if not ok:
        raise EstimationError(
            f"coordinate descent did not converge in {max_sweeps} sweeps", last_iterate=b.copy()
        )
    w = np.zeros(X.n_cols)
    w[active] = b[active] / sd[active]
    intercept = float(t.mean() - mean @ w)
    return LinearModel(intercept, w, X.column_names, float(lam), "lasso")


def lasso_standardized(model: LinearModel, X: FeatureMatrix) -> np.ndarray:
    """Weights of a fitted LASSO model on the standardized scale of ``X``."""
    return model.weights * X.rows.std(axis=0)
