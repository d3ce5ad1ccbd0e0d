"""Blocked k-fold cross-validation and prediction helpers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..errors import DomainError
from ..series_core import DatedSeries
from .design import FeatureMatrix, as_targets
from .linear import LinearModel
from .trees import TreeEnsembleModel


def predict_values(model, X: FeatureMatrix) -> np.ndarray:
    if tuple(model.column_names) != tuple(X.column_names):
        raise DomainError(
            f"model expects columns {list(model.column_names)}, got {list(X.column_names)}"
        )
    return model.predict_values(X.rows)


def predict(model: LinearModel | TreeEnsembleModel, X: FeatureMatrix, name: str = "web") -> DatedSeries:
    """Web-stream prediction for every row of ``X`` (dates must be dense)."""
    vals = predict_values(model, X)
    if not X.is_dense:
        raise DomainError("prediction dates must be consecutive days")
    return DatedSeries(X.dates[0], vals, name)


def model_from_dict(d: dict):
    if d.get("type") == "linear":
        return LinearModel.from_dict(d)
    if d.get("type") == "ensemble":
        return TreeEnsembleModel.from_dict(d)
    raise DomainError(f"unknown model type {d.get('type')!r}")


def fold_indices(n: int, k: int = 10, shuffle: bool = False, seed: int = 0) -> list[np.ndarray]:
    """Contiguous blocks in time order, sizes differing by at most one.

    ``shuffle`` permutes rows before blocking (breaks time order).
    """
    if k < 2 or n < k:
        raise DomainError(f"cannot make {k} folds from {n} rows")
    order = np.arange(n)
    if shuffle:
        order = np.random.default_rng(seed).permutation(n)
    return [np.sort(b) for b in np.array_split(order, k)]


@dataclass
class CvReport:
    grid: list
    fold_errors: np.ndarray
    chosen: int
    folds: int = 10

    @property
    def mean_errors(self) -> np.ndarray:
        return self.fold_errors.mean(axis=1)

    @property
    def best_params(self) -> dict:
        return dict(self.grid[self.chosen])

    def to_dict(self) -> dict:
        return {
            "grid": [dict(g) for g in self.grid],
            "fold_errors": [[float(e) for e in row] for row in self.fold_errors],
            "mean_errors": [float(e) for e in self.mean_errors],
            "chosen": self.chosen,
            "folds": self.folds,
        }


def cross_validate(
    X: FeatureMatrix,
    y,
    learner: Callable,
    grid: Sequence[dict],
    k: int = 10,
    seed: int = 0,
    shuffle: bool = False,
) -> CvReport:
    """Mean fold RMSE for each setting; ``learner(X, y, **setting)``.

    Grids are expected in increasing capacity order: ties go to the
    earliest setting.
    """
    if not grid:
        raise DomainError("hyperparameter grid is empty")
    t = as_targets(y, X)
    folds = fold_indices(X.n_rows, k, shuffle, seed)
    errors = np.empty((len(grid), k))
    all_rows = np.arange(X.n_rows)
    for g, setting in enumerate(grid):
        for f, test in enumerate(folds):
            train = np.setdiff1d(all_rows, test, assume_unique=True)
            model = learner(X.take(train), t[train], **setting)
            pred = predict_values(model, X.take(test))
            errors[g, f] = math.sqrt(float(np.mean((pred - t[test]) ** 2)))
    means = errors.mean(axis=1)
    chosen = int(np.flatnonzero(means == means.min())[0])
    return CvReport(list(grid), errors, chosen, k)
