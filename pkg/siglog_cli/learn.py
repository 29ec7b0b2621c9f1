"""
Predictors and feature elimination.

Linear (OLS) and logistic regression are fitted on z-scored columns after a
two-phase selection: VIF pruning of collinear columns, then backward stepwise
AIC elimination. Forests consume the full feature set (see forest.py).
"""
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.special import expit
from statsmodels.stats.outliers_influence import variance_inflation_factor
from statsmodels.tools.tools import add_constant

from .errors import ModelError
from .forest import Forest, ForestConfig, grow_forest

VIF_THRESHOLD = 4.0
VIF_CLAMP = 1e6
RSS_FLOOR = 1e-12
RIDGE_JITTER = 1e-8
LOGISTIC_L2 = 1e-6
LOGISTIC_TOL = 1e-8
LOGISTIC_MAX_ITER = 100
PROBA_EPS = 1e-12

MODEL_KINDS = ("ols", "logistic", "forest_regressor", "forest_classifier")


@dataclass
class DesignMatrix:
    X: np.ndarray
    columns: list
    y: np.ndarray
    row_ids: list = field(default_factory=list)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.X.ndim != 2 or self.X.shape[1] != len(self.columns):
            raise ModelError(f"design matrix shape {self.X.shape} does not match {len(self.columns)} columns")
        if self.X.shape[0] != self.y.shape[0]:
            raise ModelError(f"{self.X.shape[0]} rows but {self.y.shape[0]} targets")
        if len(set(self.columns)) != len(self.columns):
            raise ModelError("duplicate column names in design matrix")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise ModelError("design matrix contains missing or non-finite values")
        self.columns = list(self.columns)
        if not self.row_ids:
            self.row_ids = [str(i) for i in range(self.X.shape[0])]

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    def subset(self, columns: Sequence[str]) -> "DesignMatrix":
        idx = [self.columns.index(c) for c in columns]
        return DesignMatrix(self.X[:, idx], list(columns), self.y, list(self.row_ids))

    def rows(self, mask) -> "DesignMatrix":
        mask = np.asarray(mask)
        ids = [rid for rid, keep in zip(self.row_ids, mask) if keep] if mask.dtype == bool else [
            self.row_ids[i] for i in mask
        ]
        return DesignMatrix(self.X[mask], self.columns, self.y[mask], ids)

    @classmethod
    def from_table(cls, table: pd.DataFrame, columns: Sequence[str], target) -> "DesignMatrix":
        return cls(
            X=table[list(columns)].to_numpy(dtype=float),
            columns=list(columns),
            y=np.asarray(target, dtype=float),
            row_ids=table["student_id"].astype(str).tolist(),
        )


@dataclass
class SelectionTrace:
    removed_for_rank: list = field(default_factory=list)
    removed_by_vif: list = field(default_factory=list)
    removed_by_aic: list = field(default_factory=list)
    aic_path: list = field(default_factory=list)
    final_aic: float = math.nan
    surviving: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "removed_for_rank": list(self.removed_for_rank),
            "removed_by_vif": [{"feature": name, "vif": value} for name, value in self.removed_by_vif],
            "removed_by_aic": list(self.removed_by_aic),
            "aic_path": list(self.aic_path),
            "final_aic": self.final_aic,
            "surviving": list(self.surviving),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SelectionTrace":
        return cls(
            removed_for_rank=list(data.get("removed_for_rank", [])),
            removed_by_vif=[(r["feature"], r["vif"]) for r in data.get("removed_by_vif", [])],
            removed_by_aic=list(data.get("removed_by_aic", [])),
            aic_path=list(data.get("aic_path", [])),
            final_aic=data.get("final_aic", math.nan),
            surviving=list(data.get("surviving", [])),
        )


@dataclass
class TrainedModel:
    kind: str
    features: list
    intercept: float = 0.0
    coefficients: Optional[np.ndarray] = None
    center: Optional[np.ndarray] = None
    scale: Optional[np.ndarray] = None
    forest: Optional[Forest] = None
    selection: Optional[SelectionTrace] = None

    def _inputs(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.features):
            raise ModelError(f"{self.kind} model expects {len(self.features)} columns, got {X.shape}")
        if self.center is not None:
            X = (X - self.center) / self.scale
        return X

    def decision(self, X) -> np.ndarray:
        return self.intercept + self._inputs(X) @ self.coefficients

    def predict(self, X) -> np.ndarray:
        if self.kind == "ols":
            return self.decision(X)
        if self.kind == "logistic":
            return (self.predict_proba(X) >= 0.5).astype(float)
        return self.forest.predict(self._inputs(X))

    def predict_proba(self, X) -> np.ndarray:
        """Positive-class score: probability (logistic) or vote fraction (forest)."""
        if self.kind == "logistic":
            return np.clip(expit(self.decision(X)), PROBA_EPS, 1.0 - PROBA_EPS)
        if self.kind == "forest_classifier":
            return self.forest.predict_proba(self._inputs(X))
        raise ModelError(f"{self.kind} model has no class probabilities")

    def predict_matrix(self, matrix: DesignMatrix) -> np.ndarray:
        return self.predict(matrix.subset(self.features).X)

    def to_dict(self) -> dict:
        def _list(a):
            return None if a is None else np.asarray(a, dtype=float).tolist()

        return {
            "kind": self.kind,
            "features": list(self.features),
            "intercept": self.intercept,
            "coefficients": _list(self.coefficients),
            "center": _list(self.center),
            "scale": _list(self.scale),
            "trees": None if self.forest is None else self.forest.to_dict(),
            "selection": None if self.selection is None else self.selection.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainedModel":
        def _array(key):
            return None if data.get(key) is None else np.asarray(data[key], dtype=float)

        kind = data.get("kind")
        if kind not in MODEL_KINDS:
            raise ModelError(f"unknown model kind '{kind}'")
        return cls(
            kind=kind,
            features=list(data["features"]),
            intercept=float(data.get("intercept") or 0.0),
            coefficients=_array("coefficients"),
            center=_array("center"),
            scale=_array("scale"),
            forest=None if data.get("trees") is None else Forest.from_dict(data["trees"]),
            selection=None if data.get("selection") is None else SelectionTrace.from_dict(data["selection"]),
        )


def dump_model(model: TrainedModel, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model.to_dict(), indent=1), encoding="utf-8")


def load_model(path: Union[str, Path]) -> TrainedModel:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ModelError(f"cannot load model {path}: {e}") from e
    return TrainedModel.from_dict(data)


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------


def _standardization(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    center = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    return center, scale


def _check_rows(matrix: DesignMatrix) -> None:
    if matrix.n_rows <= len(matrix.columns):
        raise ModelError(f"need more rows ({matrix.n_rows}) than columns ({len(matrix.columns)})")


def fit_ols(matrix: DesignMatrix, standardize: bool = False) -> TrainedModel:
    """
    Least squares via the normal equations with 1e-8 jitter on the Gram diagonal.

    Args:
        matrix: Training rows and real target
        standardize: z-score columns with this matrix's mean/std first
    """
    _check_rows(matrix)
    X = matrix.X
    center = scale = None
    if standardize:
        center, scale = _standardization(X)
        X = (X - center) / scale
    A = add_constant(X, has_constant="add")
    gram = A.T @ A + RIDGE_JITTER * np.eye(A.shape[1])
    beta = np.linalg.solve(gram, A.T @ matrix.y)
    return TrainedModel(
        kind="ols",
        features=list(matrix.columns),
        intercept=float(beta[0]),
        coefficients=beta[1:],
        center=center,
        scale=scale,
    )


def fit_logistic(matrix: DesignMatrix, standardize: bool = False) -> TrainedModel:
    """
    L2-penalized logistic regression by iteratively reweighted least squares.

    Stops when the largest coefficient change drops below 1e-8 or after 100
    iterations; perfectly separated data therefore ends at the iteration cap
    with large but finite coefficients.
    """
    _check_rows(matrix)
    labels = np.unique(matrix.y)
    if not np.all(np.isin(labels, (0.0, 1.0))):
        raise ModelError(f"logistic regression needs 0/1 labels, got {labels.tolist()}")
    X = matrix.X
    center = scale = None
    if standardize:
        center, scale = _standardization(X)
        X = (X - center) / scale
    A = add_constant(X, has_constant="add")
    y = matrix.y
    beta = np.zeros(A.shape[1])
    penalty = LOGISTIC_L2 * np.eye(A.shape[1])
    for _ in range(LOGISTIC_MAX_ITER):
        p = np.clip(expit(A @ beta), PROBA_EPS, 1.0 - PROBA_EPS)
        w = p * (1.0 - p)
        hessian = A.T @ (A * w[:, None]) + penalty
        gradient = A.T @ (y - p) - LOGISTIC_L2 * beta
        step = np.linalg.solve(hessian, gradient)
        beta = beta + step
        if np.max(np.abs(step)) < LOGISTIC_TOL:
            break
    if not np.all(np.isfinite(beta)):
        raise ModelError("logistic regression diverged")
    return TrainedModel(
        kind="logistic",
        features=list(matrix.columns),
        intercept=float(beta[0]),
        coefficients=beta[1:],
        center=center,
        scale=scale,
    )


def fit_forest(matrix: DesignMatrix, cfg: ForestConfig, mode: str) -> TrainedModel:
    forest = grow_forest(matrix.X, matrix.y, cfg, mode)
    kind = "forest_classifier" if mode == "classification" else "forest_regressor"
    return TrainedModel(kind=kind, features=list(matrix.columns), forest=forest)


# ---------------------------------------------------------------------------
# Selection
# ---------------------------------------------------------------------------


def vif(matrix: DesignMatrix, column: str) -> float:
    """
    Variance inflation factor of one column against all others (with intercept).

    Perfect collinearity returns the 1e6 clamp instead of failing.
    """
    if len(matrix.columns) < 2:
        raise ModelError("VIF needs at least 2 columns")
    if matrix.n_rows < len(matrix.columns) + 1:
        raise ModelError(f"VIF needs at least {len(matrix.columns) + 1} rows, got {matrix.n_rows}")
    if column not in matrix.columns:
        raise ModelError(f"unknown column '{column}'")
    exog = add_constant(matrix.X, has_constant="add")
    with np.errstate(divide="ignore", invalid="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        value = float(variance_inflation_factor(exog, matrix.columns.index(column) + 1))
    if not math.isfinite(value) or value >= VIF_CLAMP:
        return VIF_CLAMP
    return max(1.0, value)


def _task_mode(task) -> str:
    task = getattr(task, "value", task)
    if task in ("regression", "grade"):
        return "regression"
    if task in ("classification", "gender", "performance"):
        return "classification"
    raise ModelError(f"unknown task '{task}'")


def _fit_linear(matrix: DesignMatrix, mode: str) -> TrainedModel:
    if mode == "regression":
        return fit_ols(matrix, standardize=True)
    return fit_logistic(matrix, standardize=True)


def aic(model: TrainedModel, matrix: DesignMatrix) -> float:
    """
    Akaike information criterion of a fitted linear or logistic model.

    OLS: n ln(RSS / n) + 2(k + 1); logistic: -2 logLik + 2(k + 1).
    """
    data = matrix.subset(model.features)
    n = data.n_rows
    k = len(model.features)
    if model.kind == "ols":
        rss = float(np.sum((data.y - model.predict(data.X)) ** 2))
        return n * math.log(max(rss, RSS_FLOOR) / n) + 2 * (k + 1)
    if model.kind == "logistic":
        p = model.predict_proba(data.X)
        loglik = float(np.sum(data.y * np.log(p) + (1.0 - data.y) * np.log(1.0 - p)))
        return -2.0 * loglik + 2 * (k + 1)
    raise ModelError(f"AIC is not defined for {model.kind} models")


def _aic_without(matrix: DesignMatrix, columns: list, mode: str) -> dict:
    scores = {}
    for name in columns:
        rest = [c for c in columns if c != name]
        sub = matrix.subset(rest)
        scores[name] = aic(_fit_linear(sub, mode), sub)
    return scores


def _most_correlated(matrix: DesignMatrix) -> str:
    """Column with the largest absolute correlation to another column; constant columns come first."""
    flat = sorted(name for name, s in zip(matrix.columns, np.ptp(matrix.X, axis=0)) if s == 0.0)
    if flat:
        return flat[0]
    corr = np.abs(np.corrcoef(matrix.X, rowvar=False))
    np.fill_diagonal(corr, 0.0)
    strength = corr.max(axis=1)
    worst = strength.max()
    return sorted(name for name, s in zip(matrix.columns, strength) if s == worst)[0]


def select_features(matrix: DesignMatrix, task) -> SelectionTrace:
    """
    Two-phase elimination for linear and logistic models.

    Phase 1 drops the column with the highest VIF while any VIF exceeds 4.
    When there are too few rows for VIF to be defined, the column with the
    largest absolute correlation to any other column is dropped first until
    the fit has a residual degree of freedom; these go to removed_for_rank.
    Phase 2 repeatedly drops the column whose removal gives the lowest AIC,
    as long as that lowers AIC. Ties go to the first name in sort order and at
    least one column always survives.

    Args:
        matrix: Training rows
        task: "regression"/"classification" or a task name

    Returns:
        SelectionTrace
    """
    mode = _task_mode(task)
    if len(matrix.columns) < 3:
        raise ModelError(f"selection needs at least 3 columns, got {len(matrix.columns)}")
    trace = SelectionTrace()
    columns = list(matrix.columns)

    while len(columns) > 1 and matrix.n_rows < len(columns) + 2:
        name = _most_correlated(matrix.subset(columns))
        trace.removed_for_rank.append(name)
        columns.remove(name)

    while len(columns) > 1:
        sub = matrix.subset(columns)
        scores = {name: vif(sub, name) for name in columns}
        worst = max(scores.values())
        if worst <= VIF_THRESHOLD:
            break
        name = sorted(n for n, v in scores.items() if v == worst)[0]
        trace.removed_by_vif.append((name, worst))
        columns.remove(name)

    sub = matrix.subset(columns)
    current = aic(_fit_linear(sub, mode), sub)
    trace.aic_path.append(current)
    while len(columns) > 1:
        scores = _aic_without(matrix, columns, mode)
        best = min(scores.values())
        if not best < current:
            break
        name = sorted(n for n, v in scores.items() if v == best)[0]
        trace.removed_by_aic.append(name)
        columns.remove(name)
        current = best
        trace.aic_path.append(current)

    trace.final_aic = current
    trace.surviving = columns
    return trace


def fit_selected(matrix: DesignMatrix, task) -> TrainedModel:
    """Select features, then fit OLS (regression) or logistic (classification) on the survivors."""
    mode = _task_mode(task)
    trace = select_features(matrix, mode)
    model = _fit_linear(matrix.subset(trace.surviving), mode)
    model.selection = trace
    return model
