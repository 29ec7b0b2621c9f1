"""
Bagged decision-tree ensembles.

Trees are grown with scikit-learn and then flattened into plain arrays, so a
fitted forest predicts, dumps to JSON and reloads without the estimator object.
Classification uses hard majority voting with the positive vote fraction as
score.
"""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.ensemble import RandomForestClassifier, RandomForestRegressor

from .errors import ConfigError, ModelError

LEAF = -1


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 1200
    min_leaf: int = 2
    max_depth: Optional[int] = None
    # None applies sqrt(p) for classification, max(1, p // 3) for regression
    features_per_split: Optional[int] = None
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.n_trees < 1:
            raise ConfigError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.min_leaf < 1:
            raise ConfigError(f"min_leaf must be >= 1, got {self.min_leaf}")
        if self.max_depth is not None and self.max_depth < 1:
            raise ConfigError(f"max_depth must be >= 1, got {self.max_depth}")


def features_per_split(n_features: int, mode: str) -> int:
    if mode == "classification":
        return max(1, int(math.sqrt(n_features)))
    return max(1, n_features // 3)


@dataclass
class Tree:
    """One fitted tree as parallel node arrays; `value` holds leaf outputs (class index or mean)."""

    left: np.ndarray
    right: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    value: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        active = self.left[node] != LEAF
        while np.any(active):
            idx = rows[active]
            n = node[idx]
            go_left = X[idx, self.feature[n]] <= self.threshold[n]
            node[idx] = np.where(go_left, self.left[n], self.right[n])
            active = self.left[node] != LEAF
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Tree":
        return cls(
            left=np.asarray(data["left"], dtype=np.int64),
            right=np.asarray(data["right"], dtype=np.int64),
            feature=np.asarray(data["feature"], dtype=np.int64),
            threshold=np.asarray(data["threshold"], dtype=float),
            value=np.asarray(data["value"], dtype=float),
        )


def _flatten(estimator, mode: str) -> Tree:
    nodes = estimator.tree_
    if mode == "classification":
        value = np.argmax(nodes.value[:, 0, :], axis=1).astype(float)
    else:
        value = nodes.value[:, 0, 0].astype(float)
    feature = np.where(nodes.children_left == LEAF, 0, nodes.feature).astype(np.int64)
    return Tree(
        left=nodes.children_left.astype(np.int64),
        right=nodes.children_right.astype(np.int64),
        feature=feature,
        threshold=nodes.threshold.astype(float),
        value=value,
    )


def _as_tree_input(X) -> np.ndarray:
    # trees compare features at float32 precision
    return np.asarray(X, dtype=np.float32).astype(float)


@dataclass
class Forest:
    mode: str
    trees: list
    classes: Optional[np.ndarray] = None

    def tree_outputs(self, X) -> np.ndarray:
        X = _as_tree_input(X)
        return np.vstack([tree.predict(X) for tree in self.trees])

    def predict(self, X) -> np.ndarray:
        outputs = self.tree_outputs(X)
        if self.mode == "regression":
            return outputs.mean(axis=0)
        votes = np.stack([(outputs == k).sum(axis=0) for k in range(len(self.classes))], axis=1)
        return self.classes[np.argmax(votes, axis=1)]

    def predict_proba(self, X) -> np.ndarray:
        """Fraction of trees voting for the positive class (label 1)."""
        if self.mode != "classification":
            raise ModelError("predict_proba is only defined for classification forests")
        outputs = self.tree_outputs(X)
        positive = np.flatnonzero(self.classes == 1)
        if positive.size == 0:
            return np.zeros(outputs.shape[1])
        return (outputs == positive[0]).mean(axis=0)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "classes": None if self.classes is None else self.classes.tolist(),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Forest":
        classes = data.get("classes")
        return cls(
            mode=data["mode"],
            trees=[Tree.from_dict(t) for t in data["trees"]],
            classes=None if classes is None else np.asarray(classes, dtype=float),
        )


def grow_forest(X, y, cfg: ForestConfig, mode: str) -> Forest:
    """
    Fit a bootstrap-aggregated ensemble.

    Per-tree random streams are drawn from cfg.seed before any tree is grown,
    so results do not depend on cfg.threads.

    Args:
        X: (n, p) feature matrix
        y: Targets (real for regression, labels for classification)
        cfg: Ensemble settings
        mode: "regression" or "classification"

    Raises:
        ModelError: Too few rows or non-finite input
    """
    if mode not in ("regression", "classification"):
        raise ModelError(f"unknown forest mode '{mode}'")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ModelError(f"forest input shapes {X.shape} and {y.shape} do not match")
    if X.shape[0] < 2 * cfg.min_leaf:
        raise ModelError(f"forest needs at least {2 * cfg.min_leaf} rows, got {X.shape[0]}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ModelError("forest input contains non-finite values")

    mtry = cfg.features_per_split or features_per_split(X.shape[1], mode)
    params = dict(
        n_estimators=cfg.n_trees,
        min_samples_leaf=cfg.min_leaf,
        max_depth=cfg.max_depth,
        max_features=min(mtry, X.shape[1]),
        bootstrap=True,
        random_state=cfg.seed,
        n_jobs=cfg.threads,
    )
    if mode == "classification":
        classes = np.unique(y)
        if classes.size == 1:
            # single-class training data: every tree is a leaf predicting it
            leaf = Tree(
                left=np.array([LEAF]),
                right=np.array([LEAF]),
                feature=np.array([0]),
                threshold=np.array([0.0]),
                value=np.array([0.0]),
            )
            return Forest(mode, [leaf] * cfg.n_trees, classes)
        estimator = RandomForestClassifier(**params).fit(X, np.searchsorted(classes, y))
    else:
        classes = None
        estimator = RandomForestRegressor(**params).fit(X, y)
    return Forest(mode, [_flatten(e, mode) for e in estimator.estimators_], classes)
