"""
Student-level cross-validation of the prediction tasks and the report bundle.
"""
import json
import math
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd
from sklearn.metrics import (
    accuracy_score,
    confusion_matrix,
    f1_score,
    mean_squared_error,
    r2_score,
    roc_auc_score,
)
from sklearn.model_selection import StratifiedKFold

from .errors import ConfigError, ModelError, PipelineError, PipelineWarning
from .features import ID_COLUMNS
from .forest import ForestConfig
from .ink import PERFORMANCE_THRESHOLD
from .learn import DesignMatrix, TrainedModel, dump_model, fit_forest, fit_selected

N_FOLDS = 5
MIN_CLASS_SIZE = 5
SNRC_COLUMN = "mean_snr_over_c_avg"
GRADES = range(1, 10)
FLOAT_FORMAT = "%.10g"
METRIC_KEYS = ["task", "family", "model", "scope"]
METRIC_COLUMNS = METRIC_KEYS + ["n", "r2", "rmse", "acc", "f1", "auc", "baseline"]


class Task(str, Enum):
    GRADE = "grade"
    GENDER = "gender"
    PERFORMANCE = "performance"


MODEL_NAMES = ("linear", "logistic", "forest")


@dataclass(frozen=True)
class TaskSpec:
    task: Task
    family: str
    models: tuple = ("linear", "forest")

    def __post_init__(self):
        try:
            object.__setattr__(self, "task", Task(self.task))
        except ValueError:
            raise ConfigError(f"unknown task '{self.task}'") from None
        for model in self.models:
            if model not in MODEL_NAMES:
                raise ConfigError(f"unknown model '{model}'")
            if model == "logistic" and self.task == Task.GRADE:
                raise ConfigError("the grade task is a regression; use --model linear or forest")

    @property
    def is_regression(self) -> bool:
        return self.task == Task.GRADE

    def target(self, table: pd.DataFrame) -> np.ndarray:
        """Grade, female=1, or perfect ratio above 0.45 as 1."""
        if self.task == Task.GRADE:
            return table["grade"].to_numpy(dtype=float)
        if self.task == Task.GENDER:
            return (table["gender"] == "female").to_numpy(dtype=float)
        return (table["perfect_ratio"].to_numpy(dtype=float) > PERFORMANCE_THRESHOLD).astype(float)


@dataclass(frozen=True)
class FoldPlan:
    folds: tuple
    labels: dict

    def fold_of(self) -> dict:
        return {sid: k for k, ids in enumerate(self.folds) for sid in ids}


@dataclass
class EvaluationReport:
    task: str
    family: str
    model: str
    pooled: dict
    fold_metrics: list
    predictions: pd.DataFrame
    baseline: float
    confusion: Optional[np.ndarray] = None
    fold_confusions: list = field(default_factory=list)
    selections: list = field(default_factory=list)
    models: list = field(default_factory=list)

    def metric_rows(self) -> list[dict]:
        rows = [dict(self._key("pooled"), **self.pooled, baseline=self.baseline)]
        for k, metrics in enumerate(self.fold_metrics):
            rows.append(dict(self._key(f"fold{k}"), **metrics, baseline=self.baseline))
        return rows

    def _key(self, scope: str) -> dict:
        return {"task": self.task, "family": self.family, "model": self.model, "scope": scope}


def make_folds(ids: Sequence[str], labels: Sequence, seed: int, n_folds: int = N_FOLDS) -> FoldPlan:
    """
    Seeded stratified assignment of students to folds.

    Fold sizes differ by at most one and each class is spread evenly. When
    every class is smaller than the fold count the split falls back to a
    shuffled unstratified one.

    Raises:
        ModelError: Fewer than 10 students or duplicate ids
    """
    ids = [str(i) for i in ids]
    if len(ids) < 2 * n_folds:
        raise ModelError(f"cross-validation needs at least {2 * n_folds} students, got {len(ids)}")
    if len(set(ids)) != len(ids):
        raise ModelError("duplicate student ids in fold input")
    labels = list(labels)
    strata = np.asarray(labels)
    values, counts = np.unique(strata, return_counts=True)
    for value, count in zip(values, counts):
        if count < MIN_CLASS_SIZE:
            warnings.warn(
                f"class {value} has only {count} students; stratification is best effort",
                PipelineWarning,
            )
    if np.all(counts < n_folds):
        strata = np.zeros(len(ids))
    splitter = StratifiedKFold(n_splits=n_folds, shuffle=True, random_state=seed)
    with warnings.catch_warnings():
        # small classes are reported above
        warnings.simplefilter("ignore", UserWarning)
        splits = list(splitter.split(np.zeros((len(ids), 1)), strata))
    folds = tuple(tuple(ids[i] for i in test) for _, test in splits)
    return FoldPlan(folds, dict(zip(ids, labels)))


def r2_rmse(true, predicted) -> tuple[float, float]:
    true = np.asarray(true, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if true.size == 0 or true.shape != predicted.shape:
        raise ModelError(f"r2/rmse need equal nonzero lengths, got {true.shape} and {predicted.shape}")
    rmse = math.sqrt(mean_squared_error(true, predicted))
    if np.all(true == true[0]):
        warnings.warn("R² is undefined for constant true values", PipelineWarning)
        return math.nan, rmse
    return float(r2_score(true, predicted)), rmse


def classification_metrics(true, predicted, scores) -> tuple[float, float, float, np.ndarray]:
    """
    Accuracy, positive-class F1, ROC AUC and the 2x2 confusion matrix.

    AUC is NaN (with a warning) when the truth holds a single class.
    """
    true = np.asarray(true, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    scores = np.asarray(scores, dtype=float)
    if true.size == 0 or not (true.shape == predicted.shape == scores.shape):
        raise ModelError("classification metrics need equal nonzero lengths")
    acc = float(accuracy_score(true, predicted))
    f1 = float(f1_score(true, predicted, pos_label=1.0, zero_division=0))
    if np.unique(true).size < 2:
        warnings.warn("AUC is undefined when only one class is present", PipelineWarning)
        auc = math.nan
    else:
        auc = float(roc_auc_score(true, scores))
    confusion = confusion_matrix(true, predicted, labels=[0.0, 1.0])
    return acc, f1, auc, confusion


def majority_baseline(labels) -> float:
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ModelError("majority baseline of an empty label set")
    _, counts = np.unique(labels, return_counts=True)
    return float(counts.max() / labels.size)


def _metrics(spec: TaskSpec, true, predicted, scores) -> tuple[dict, Optional[np.ndarray]]:
    if spec.is_regression:
        r2, rmse = r2_rmse(true, predicted)
        return {"n": len(true), "r2": r2, "rmse": rmse}, None
    acc, f1, auc, confusion = classification_metrics(true, predicted, scores)
    return {"n": len(true), "acc": acc, "f1": f1, "auc": auc}, confusion


def _fit(spec: TaskSpec, model: str, train: DesignMatrix, forest_cfg: ForestConfig) -> TrainedModel:
    if model == "forest":
        return fit_forest(train, forest_cfg, "regression" if spec.is_regression else "classification")
    return fit_selected(train, "regression" if spec.is_regression else "classification")


def feature_columns(table: pd.DataFrame) -> list[str]:
    return [c for c in table.columns if c not in ID_COLUMNS]


def run_task(
    table: pd.DataFrame,
    spec: TaskSpec,
    model: str,
    seed: int,
    forest_cfg: Optional[ForestConfig] = None,
) -> EvaluationReport:
    """
    Five-fold student-level cross-validation of one (task, family, model).

    Args:
        table: Student-level feature table of one family
        spec: Task, family and model set
        model: "linear" (OLS or logistic with selection), "logistic" or "forest"
        seed: Seed for folds and forest
        forest_cfg: Forest settings; its seed is replaced by `seed`

    Returns:
        EvaluationReport with pooled and per-fold metrics

    Raises:
        ModelError: Fold failures carry the fold number
    """
    if model not in MODEL_NAMES:
        raise ConfigError(f"unknown model '{model}'")
    if model == "logistic" and spec.is_regression:
        raise ConfigError("the grade task is a regression; use --model linear or forest")
    forest_cfg = replace(forest_cfg or ForestConfig(), seed=seed)
    columns = feature_columns(table)
    y = spec.target(table)
    matrix = DesignMatrix.from_table(table, columns, y)
    plan = make_folds(matrix.row_ids, y.tolist(), seed)

    fold_of = plan.fold_of()
    fold_metrics, fold_confusions, selections, models, parts = [], [], [], [], []
    for k in range(len(plan.folds)):
        test_mask = np.array([fold_of[rid] == k for rid in matrix.row_ids])
        train, test = matrix.rows(~test_mask), matrix.rows(test_mask)
        if set(train.row_ids) & set(test.row_ids):
            raise ModelError(f"fold {k}: training and held-out students overlap")
        try:
            fitted = _fit(spec, model, train, forest_cfg)
            data = test.subset(fitted.features)
            predicted = fitted.predict(data.X)
            scores = predicted if spec.is_regression else fitted.predict_proba(data.X)
            metrics, confusion = _metrics(spec, test.y, predicted, scores)
        except PipelineError as e:
            raise ModelError(f"fold {k}: {e}") from e
        fold_metrics.append(metrics)
        if confusion is not None:
            fold_confusions.append(confusion)
        if fitted.selection is not None:
            selections.append(dict(fold=k, **fitted.selection.to_dict()))
        models.append(fitted)
        parts.append(
            pd.DataFrame(
                {"student_id": test.row_ids, "fold": k, "true": test.y, "predicted": predicted, "score": scores}
            )
        )

    predictions = pd.concat(parts, ignore_index=True)
    pooled, confusion = _metrics(spec, predictions["true"], predictions["predicted"], predictions["score"])
    if confusion is not None and not np.array_equal(confusion, np.sum(fold_confusions, axis=0)):
        raise ModelError("pooled confusion counts differ from the fold sum")
    if spec.is_regression:
        baseline = float(np.sqrt(np.mean((y - y.mean()) ** 2)))
    else:
        baseline = majority_baseline(y)
    return EvaluationReport(
        task=spec.task.value,
        family=spec.family,
        model=model,
        pooled=pooled,
        fold_metrics=fold_metrics,
        predictions=predictions,
        baseline=baseline,
        confusion=confusion,
        fold_confusions=fold_confusions,
        selections=selections,
        models=models,
    )


def snrc_by_grade(table: pd.DataFrame) -> pd.DataFrame:
    """
    Five-number summary of student-mean SNR/C per grade.

    Grades without students are omitted with a warning.
    """
    if SNRC_COLUMN not in table.columns:
        raise ModelError(f"feature table has no '{SNRC_COLUMN}' column; compute siglog features first")
    rows = []
    for grade in GRADES:
        values = table.loc[table["grade"] == grade, SNRC_COLUMN].to_numpy(dtype=float)
        if values.size == 0:
            warnings.warn(f"grade {grade} has no students", PipelineWarning)
            continue
        q = np.percentile(values, [0, 25, 50, 75, 100])
        rows.append({"grade": grade, "n": values.size, "min": q[0], "q1": q[1], "median": q[2], "q3": q[3], "max": q[4]})
    return pd.DataFrame(rows, columns=["grade", "n", "min", "q1", "median", "q3", "max"])


# ---------------------------------------------------------------------------
# Report bundle
# ---------------------------------------------------------------------------


def _write_csv(frame: pd.DataFrame, path: Path) -> None:
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def write_metrics(reports: Sequence[EvaluationReport], out_dir: Union[str, Path]) -> Path:
    """Merge report rows into metrics.csv, replacing rows with the same key."""
    path = Path(out_dir) / "metrics.csv"
    new = pd.DataFrame([row for r in reports for row in r.metric_rows()], columns=METRIC_COLUMNS)
    if path.exists():
        old = pd.read_csv(path)
        keys = set(map(tuple, new[METRIC_KEYS].astype(str).to_numpy()))
        old = old[[tuple(k) not in keys for k in old[METRIC_KEYS].astype(str).to_numpy()]]
        new = pd.concat([old, new], ignore_index=True) if len(old) else new
    new = new.sort_values(METRIC_KEYS, kind="mergesort").reset_index(drop=True)
    _write_csv(new[METRIC_COLUMNS], path)
    return path


def write_report(
    reports: Sequence[EvaluationReport],
    out_dir: Union[str, Path],
    snrc: Optional[pd.DataFrame] = None,
    dump_models: bool = False,
) -> list[Path]:
    """
    Write the report bundle for a set of evaluations.

    Returns:
        Paths written
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [write_metrics(reports, out)]
    selections: dict = {}
    for report in reports:
        if report.confusion is not None:
            path = out / f"confusion_{report.task}_{report.family}_{report.model}.csv"
            frame = pd.DataFrame(report.confusion, index=["true_0", "true_1"], columns=["pred_0", "pred_1"])
            frame.to_csv(path, index_label="actual", lineterminator="\n")
            written.append(path)
        if report.task == Task.GRADE.value:
            path = out / f"grade_scatter_{report.family}_{report.model}.csv"
            _write_csv(report.predictions[["student_id", "fold", "true", "predicted"]], path)
            written.append(path)
        if report.selections:
            selections.setdefault((report.task, report.family), {})[report.model] = report.selections
        if dump_models:
            for k, model in enumerate(report.models):
                path = out / "models" / f"{report.task}_{report.family}_{report.model}_fold{k}.json"
                dump_model(model, path)
                written.append(path)
    for (task, family), by_model in selections.items():
        path = out / f"selection_{task}_{family}.json"
        path.write_text(json.dumps(by_model, indent=1, sort_keys=True) + "\n", encoding="utf-8")
        written.append(path)
    if snrc is not None:
        path = out / "snrc_by_grade.csv"
        _write_csv(snrc, path)
        written.append(path)
    return written
