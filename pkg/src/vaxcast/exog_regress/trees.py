"""CART regression trees, squared-error gradient boosting and random forests."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..errors import DomainError
from .design import FeatureMatrix, as_targets

LEAF = -1


@dataclass
class RegressionTree:
    """Flat binary tree; node 0 is the root, ``feature == -1`` marks a leaf.

    Samples with ``x[feature] <= threshold`` go left.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature == LEAF))

    def predict_values(self, rows: np.ndarray) -> np.ndarray:
        node = np.zeros(rows.shape[0], dtype=np.int64)
        while True:
            f = self.feature[node]
            inner = f != LEAF
            if not inner.any():
                return self.value[node]
            idx = np.flatnonzero(inner)
            go_left = rows[idx, f[idx]] <= self.threshold[node[idx]]
            node[idx] = np.where(go_left, self.left[node[idx]], self.right[node[idx]])

    def to_dict(self, node: int = 0) -> dict:
        if self.feature[node] == LEAF:
            return {"leaf": float(self.value[node])}
        return {
            "column": int(self.feature[node]),
            "threshold": float(self.threshold[node]),
            "left": self.to_dict(int(self.left[node])),
            "right": self.to_dict(int(self.right[node])),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        feat, thr, left, right, val = [], [], [], [], []

        def add(nd):
            i = len(feat)
            feat.append(LEAF)
            thr.append(0.0)
            left.append(LEAF)
            right.append(LEAF)
            val.append(0.0)
            if "leaf" in nd:
                val[i] = nd["leaf"]
            else:
                feat[i] = nd["column"]
                thr[i] = nd["threshold"]
                left[i] = add(nd["left"])
                right[i] = add(nd["right"])
            return i

        add(d)
        return cls(
            np.array(feat, dtype=np.int64),
            np.array(thr, dtype=float),
            np.array(left, dtype=np.int64),
            np.array(right, dtype=np.int64),
            np.array(val, dtype=float),
        )


def _best_split(X, y, idx, columns, min_leaf):
    """Best (column, threshold, gain) over ``columns``; ties keep the first."""
    n = idx.size
    yy = y[idx]
    total = yy.sum()
    base = total * total / n
    best = (LEAF, 0.0, 0.0)
    counts = np.arange(1, n)
    ok_size = (counts >= min_leaf) & (n - counts >= min_leaf)
    if not ok_size.any():
        return best
    for col in columns:
        x = X[idx, col]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        cs = np.cumsum(yy[order])[:-1]
        valid = ok_size & (xs[:-1] < xs[1:])
        if not valid.any():
            continue
        gain = cs * cs / counts + (total - cs) ** 2 / (n - counts) - base
        gain = np.where(valid, gain, -np.inf)
        k = int(np.argmax(gain))
        if gain[k] > best[2]:
            best = (int(col), 0.5 * (xs[k] + xs[k + 1]), float(gain[k]))
    return best


def grow_tree(X: np.ndarray, y: np.ndarray, max_depth=None, min_leaf: int = 1, mtry=None, rng=None) -> RegressionTree:
    """Greedy variance-reduction tree on raw arrays.

    With ``mtry`` set, each split considers ``mtry`` columns drawn from
    ``rng`` without replacement.
    """
    n, k = X.shape
    feat, thr, left, right, val = [], [], [], [], []
    stack = [(np.arange(n), 0, None, False)]
    while stack:
        idx, depth, parent, is_right = stack.pop()
        node = len(feat)
        if parent is not None:
            (right if is_right else left)[parent] = node
        feat.append(LEAF)
        thr.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        val.append(float(y[idx].mean()))
        if (max_depth is not None and depth >= max_depth) or idx.size < 2 * min_leaf:
            continue
        yy = y[idx]
        if np.all(yy == yy[0]):
            continue
        if mtry is None or mtry >= k:
            cols = range(k)
        else:
            cols = np.sort(rng.choice(k, size=mtry, replace=False))
        col, cut, gain = _best_split(X, y, idx, cols, min_leaf)
        if col == LEAF or not gain > 0:
            continue
        feat[node] = col
        thr[node] = cut
        go_left = X[idx, col] <= cut
        # right pushed first so the left subtree is numbered first
        stack.append((idx[~go_left], depth + 1, node, True))
        stack.append((idx[go_left], depth + 1, node, False))
    return RegressionTree(
        np.array(feat, dtype=np.int64),
        np.array(thr, dtype=float),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(val, dtype=float),
    )


@dataclass
class TreeEnsembleModel:
    kind: str
    trees: list
    column_names: tuple
    learning_rate: float = 1.0
    base_prediction: float = 0.0
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("boost", "random_forest"):
            raise DomainError(f"unknown ensemble kind {self.kind!r}")
        if not self.trees:
            raise DomainError("an ensemble needs at least one tree")

    def tree_outputs(self, rows: np.ndarray) -> np.ndarray:
        return np.vstack([t.predict_values(rows) for t in self.trees])

    def predict_values(self, rows: np.ndarray) -> np.ndarray:
        out = self.tree_outputs(rows)
        if self.kind == "boost":
            return self.base_prediction + self.learning_rate * out.sum(axis=0)
        # exactly rounded sums make the average independent of tree order
        m = len(self.trees)
        return np.array([math.fsum(col) / m for col in out.T])

    def staged_predict_values(self, rows: np.ndarray):
        """Boosting predictions after each tree, as a (n_trees, n_rows) array."""
        if self.kind != "boost":
            raise DomainError("staged predictions are defined for boosting only")
        out = self.tree_outputs(rows)
        return self.base_prediction + self.learning_rate * np.cumsum(out, axis=0)

    def to_dict(self) -> dict:
        return {
            "type": "ensemble",
            "kind": self.kind,
            "column_names": list(self.column_names),
            "learning_rate": self.learning_rate,
            "base_prediction": self.base_prediction,
            "seed": self.seed,
            "params": dict(self.params),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeEnsembleModel":
        return cls(
            kind=d["kind"],
            trees=[RegressionTree.from_dict(t) for t in d["trees"]],
            column_names=tuple(d["column_names"]),
            learning_rate=d["learning_rate"],
            base_prediction=d["base_prediction"],
            seed=d["seed"],
            params=dict(d.get("params", {})),
        )


BOOST_DEFAULTS = {"n_trees": 200, "max_depth": 3, "learning_rate": 0.1, "min_leaf": 1, "subsample": 1.0, "seed": 0}
FOREST_DEFAULTS = {"n_trees": 500, "max_depth": None, "min_leaf": 5, "mtry": None, "bootstrap": True, "seed": 0}


def _tree_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), index]))


def fit_boost(X: FeatureMatrix, y, n_trees=200, max_depth=3, learning_rate=0.1, min_leaf=1, subsample=1.0, seed=0) -> TreeEnsembleModel:
    """Squared-error gradient boosting: each tree fits the current residuals."""
    t = as_targets(y, X)
    if X.n_rows == 0:
        raise DomainError("empty feature matrix")
    if n_trees < 1 or (max_depth is not None and max_depth < 1):
        raise DomainError("n_trees and max_depth must be at least 1")
    if not 0 < learning_rate <= 1:
        raise DomainError("learning_rate must lie in (0, 1]")
    if not 0 < subsample <= 1:
        raise DomainError("subsample must lie in (0, 1]")
    rows = X.rows
    base = float(t.mean())
    pred = np.full(t.size, base)
    trees = []
    for m in range(n_trees):
        resid = t - pred
        if subsample < 1:
            rng = _tree_rng(seed, m)
            size = max(1, int(round(subsample * t.size)))
            idx = np.sort(rng.choice(t.size, size=size, replace=False))
            tree = grow_tree(rows[idx], resid[idx], max_depth, min_leaf)
        else:
            tree = grow_tree(rows, resid, max_depth, min_leaf)
        trees.append(tree)
        pred = pred + learning_rate * tree.predict_values(rows)
    params = {"n_trees": n_trees, "max_depth": max_depth, "learning_rate": learning_rate,
              "min_leaf": min_leaf, "subsample": subsample, "seed": seed}
    return TreeEnsembleModel("boost", trees, X.column_names, learning_rate, base, seed, params)


def _forest_tree(rows, t, index, seed, max_depth, min_leaf, mtry, bootstrap):
    rng = _tree_rng(seed, index)
    if bootstrap:
        idx = rng.integers(0, t.size, size=t.size)
        return grow_tree(rows[idx], t[idx], max_depth, min_leaf, mtry, rng)
    return grow_tree(rows, t, max_depth, min_leaf, mtry, rng)


def fit_rf(X: FeatureMatrix, y, n_trees=500, max_depth=None, min_leaf=5, mtry=None, bootstrap=True, seed=0, n_jobs=1) -> TreeEnsembleModel:
    """Bagged trees with ``mtry`` columns tried per split.

    Tree ``i`` draws from its own generator seeded by ``(seed, i)``, so the
    result does not depend on ``n_jobs``.
    """
    t = as_targets(y, X)
    if n_trees < 1:
        raise DomainError("n_trees must be at least 1")
    if mtry is None:
        mtry = max(1, math.ceil(X.n_cols / 3))
    if not 1 <= mtry <= X.n_cols:
        raise DomainError(f"mtry must lie in [1, {X.n_cols}]")
    if min_leaf < 1 or min_leaf >= X.n_rows:
        raise DomainError(f"min_leaf must lie in [1, {X.n_rows}) for {X.n_rows} samples")
    args = (X.rows, t)
    kw = dict(seed=seed, max_depth=max_depth, min_leaf=min_leaf, mtry=mtry, bootstrap=bootstrap)
    if n_jobs == 1:
        trees = [_forest_tree(*args, i, **kw) for i in range(n_trees)]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            trees = list(pool.map(lambda i: _forest_tree(*args, i, **kw), range(n_trees)))
    params = {"n_trees": n_trees, "max_depth": max_depth, "min_leaf": min_leaf, "mtry": mtry,
              "bootstrap": bootstrap, "seed": seed}
    return TreeEnsembleModel("random_forest", trees, X.column_names, 1.0, 0.0, seed, params)
