"""Cross-validation protocol, classification/regression metrics, ROC/AUC,
and percentile-bootstrap confidence intervals.

Metrics are computed in float64 on pooled per-subject predictions: each
fold's model predicts its held-out subjects, the predictions are pooled,
and point metrics plus CIs are taken over that pooled set.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, Sequence

import numpy as np

from .errors import DegenerateDataError, StratificationError, UndefinedMetricError

logger = logging.getLogger(__name__)


# ------------------------------------------------------------ fold splits

def stratified_kfold(ids: Sequence[str], labels: Sequence, k: int = 5,
                     seed: int = 0, strict: bool = True) -> list[list[str]]:
    """Shuffle within each class, then deal members round-robin to k folds.

    A pure function of (ids, labels, k, seed). With strict=True every class
    must have at least k members.
    """
    ids = list(ids)
    labels = list(labels)
    if len(ids) != len(labels):
        raise ValueError("ids and labels must have equal length")
    if len(ids) < k:
        raise StratificationError(f"cannot split {len(ids)} subjects into {k} folds")
    by_class: dict = {}
    for sid, label in zip(ids, labels):
        by_class.setdefault(label, []).append(sid)
    if strict:
        for label, members in sorted(by_class.items(), key=lambda kv: str(kv[0])):
            if len(members) < k:
                raise StratificationError(
                    f"class {label!r} has {len(members)} members, fewer than k={k}")
    rng = np.random.default_rng(seed)
    folds: list[list[str]] = [[] for _ in range(k)]
    for label in sorted(by_class, key=str):
        members = sorted(by_class[label])
        rng.shuffle(members)
        for i, sid in enumerate(members):
            folds[i % k].append(sid)
    return [sorted(fold) for fold in folds]


# ----------------------------------------------------------- point metrics

def confusion_counts(labels, predictions) -> tuple[int, int, int, int]:
    labels = np.asarray(labels)
    predictions = np.asarray(predictions)
    tp = int(np.sum((labels == 1) & (predictions == 1)))
    fn = int(np.sum((labels == 1) & (predictions == 0)))
    tn = int(np.sum((labels == 0) & (predictions == 0)))
    fp = int(np.sum((labels == 0) & (predictions == 1)))
    return tp, fn, tn, fp


def accuracy(labels, probs, threshold: float = 0.5) -> float:
    labels = np.asarray(labels)
    preds = np.asarray(probs) > threshold
    return float(np.mean(preds == (labels == 1)))


def sensitivity(labels, probs, threshold: float = 0.5) -> float:
    tp, fn, _, _ = confusion_counts(labels, np.asarray(probs) > threshold)
    if tp + fn == 0:
        raise UndefinedMetricError("sensitivity undefined without positives")
    return tp / (tp + fn)


def specificity(labels, probs, threshold: float = 0.5) -> float:
    _, _, tn, fp = confusion_counts(labels, np.asarray(probs) > threshold)
    if tn + fp == 0:
        raise UndefinedMetricError("specificity undefined without negatives")
    return tn / (tn + fp)


def roc_points(labels, scores) -> tuple[np.ndarray, np.ndarray]:
    """ROC curve as (fpr, tpr) arrays, one point per distinct score."""
    labels = np.asarray(labels, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = float(np.sum(labels == 1))
    n_neg = float(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC needs both classes present")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    tps = np.cumsum(sorted_labels == 1)
    fps = np.cumsum(sorted_labels == 0)
    # keep only the last index of each tied-score run
    distinct = np.r_[np.nonzero(np.diff(sorted_scores))[0], len(sorted_scores) - 1]
    tpr = np.r_[0.0, tps[distinct] / n_pos]
    fpr = np.r_[0.0, fps[distinct] / n_neg]
    return fpr, tpr


def auc(labels, scores) -> float:
    """Area under the ROC curve by trapezoidal integration (ties get 1/2)."""
    fpr, tpr = roc_points(labels, scores)
    return float(np.trapezoid(tpr, fpr))


@dataclass
class ClassificationMetrics:
    acc: float
    sen: Optional[float]
    spe: Optional[float]
    auc: Optional[float]

    def to_dict(self) -> dict:
        return {"acc": self.acc, "sen": self.sen, "spe": self.spe, "auc": self.auc}


def classification_metrics(labels, probs, threshold: float = 0.5) -> ClassificationMetrics:
    """Confusion metrics at the threshold plus trapezoidal AUC.

    With a single class present only accuracy is defined; the undefined
    fields come back as None.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.size and (probs.min() < 0.0 or probs.max() > 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    acc = accuracy(labels, probs, threshold)
    try:
        sen = sensitivity(labels, probs, threshold)
        spe = specificity(labels, probs, threshold)
        area = auc(labels, probs)
    except UndefinedMetricError:
        return ClassificationMetrics(acc=acc, sen=None, spe=None, auc=None)
    return ClassificationMetrics(acc=acc, sen=sen, spe=spe, auc=area)


@dataclass
class RegressionMetrics:
    mae: float
    mse: float
    rmse: float
    r2: Optional[float]
    evs: Optional[float]

    def to_dict(self) -> dict:
        return {"mae": self.mae, "mse": self.mse, "rmse": self.rmse,
                "r2": self.r2, "evs": self.evs}


def r_squared(targets, predictions) -> float:
    targets = np.asarray(targets, dtype=np.float64)
    predictions = np.asarray(predictions, dtype=np.float64)
    ss_tot = float(np.sum((targets - targets.mean()) ** 2))
    if ss_tot == 0.0:
        raise UndefinedMetricError("R^2 undefined for zero-variance targets")
    ss_res = float(np.sum((targets - predictions) ** 2))
    return 1.0 - ss_res / ss_tot


def explained_variance(targets, predictions) -> float:
    targets = np.asarray(targets, dtype=np.float64)
    predictions = np.asarray(predictions, dtype=np.float64)
    var_y = float(np.var(targets))
    if var_y == 0.0:
        raise UndefinedMetricError("EVS undefined for zero-variance targets")
    return 1.0 - float(np.var(targets - predictions)) / var_y


def regression_metrics(targets, predictions) -> RegressionMetrics:
    targets = np.asarray(targets, dtype=np.float64)
    predictions = np.asarray(predictions, dtype=np.float64)
    if targets.shape != predictions.shape or targets.size == 0:
        raise ValueError("targets and predictions must be equal-length and nonempty")
    err = targets - predictions
    mae = float(np.mean(np.abs(err)))
    mse = float(np.mean(err**2))
    rmse = float(np.sqrt(mse))
    try:
        r2 = r_squared(targets, predictions)
        evs = explained_variance(targets, predictions)
    except UndefinedMetricError:
        return RegressionMetrics(mae=mae, mse=mse, rmse=rmse, r2=None, evs=None)
    return RegressionMetrics(mae=mae, mse=mse, rmse=rmse, r2=r2, evs=evs)


# -------------------------------------------------------------- bootstrap

def bootstrap_ci(outcomes: Sequence, statistic: Callable, n_boot: int = 2000,
                 level: float = 0.95, seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap interval over per-subject outcome records.

    Resamples with replacement; a resample on which the statistic is
    undefined (single class, zero variance) is redrawn, with total draws
    capped at 10 * n_boot.
    """
    outcomes = list(outcomes)
    n = len(outcomes)
    if n < 2:
        raise DegenerateDataError("bootstrap needs at least two outcomes")
    rng = np.random.default_rng(seed)
    stats = []
    attempts = 0
    while len(stats) < n_boot:
        if attempts >= 10 * n_boot:
            raise DegenerateDataError(
                f"gave up after {attempts} bootstrap draws; statistic almost "
                "always undefined on resamples")
        idx = rng.integers(0, n, size=n)
        attempts += 1
        try:
            stats.append(float(statistic([outcomes[i] for i in idx])))
        except UndefinedMetricError:
            continue
    alpha = (1.0 - level) / 2.0
    lo, hi = np.percentile(stats, [100.0 * alpha, 100.0 * (1.0 - alpha)])
    return float(lo), float(hi)


# ---------------------------------------------------------------- reports

class Recipe(Protocol):
    """A trainable model family run_cv can cross-validate."""

    name: str
    task: str  # classification | regression

    def fit(self, samples: Sequence, seed: int): ...

    def predict(self, fitted, sample) -> float: ...


@dataclass
class EvalReport:
    task: str
    recipe: str
    config_hash: str
    seed: int
    k: int
    n_boot: int
    folds: list[dict] = field(default_factory=list)
    pooled: Optional[dict] = None
    ci: Optional[dict] = None
    predictions: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "task": self.task, "recipe": self.recipe,
            "config_hash": self.config_hash, "seed": self.seed, "k": self.k,
            "n_boot": self.n_boot, "folds": self.folds, "pooled": self.pooled,
            "ci": self.ci, "predictions": self.predictions,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def summary_table(self) -> str:
        """Text summary shaped like a results table row with CI lines."""
        if self.pooled is None:
            return f"{self.recipe}: pooled metrics unavailable (a fold failed)\n"
        names = (["acc", "sen", "spe", "auc"] if self.task == "classification"
                 else ["mae", "mse", "rmse", "r2", "evs"])
        width = max(len(self.recipe), 12) + 2
        header = " " * width + "".join(f"{n.upper():>14}" for n in names)
        fmt = lambda v: "     -" if v is None else f"{v:14.3f}"
        row = f"{self.recipe:<{width}}" + "".join(fmt(self.pooled.get(n)) for n in names)
        cis = []
        for n in names:
            interval = (self.ci or {}).get(n)
            cis.append("             -" if interval is None
                       else f" [{interval[0]:.3f}-{interval[1]:.3f}]")
        ci_row = " " * width + "".join(f"{c:>14}" for c in cis)
        return "\n".join([header, row, ci_row]) + "\n"


def classification_stats(threshold: float = 0.5) -> dict[str, Callable]:
    return {
        "acc": lambda oc: accuracy([o[0] for o in oc], [o[1] for o in oc], threshold),
        "sen": lambda oc: sensitivity([o[0] for o in oc], [o[1] for o in oc], threshold),
        "spe": lambda oc: specificity([o[0] for o in oc], [o[1] for o in oc], threshold),
        "auc": lambda oc: auc([o[0] for o in oc], [o[1] for o in oc]),
    }

REGRESSION_STATS: dict[str, Callable] = {
    "mae": lambda oc: float(np.mean([abs(t - p) for t, p in oc])),
    "mse": lambda oc: float(np.mean([(t - p) ** 2 for t, p in oc])),
    "rmse": lambda oc: float(np.sqrt(np.mean([(t - p) ** 2 for t, p in oc]))),
    "r2": lambda oc: r_squared([o[0] for o in oc], [o[1] for o in oc]),
    "evs": lambda oc: explained_variance([o[0] for o in oc], [o[1] for o in oc]),
}


def _quartile_buckets(values: Sequence[float]) -> list[int]:
    values = np.asarray(values, dtype=np.float64)
    edges = np.quantile(values, [0.25, 0.5, 0.75])
    return [int(np.searchsorted(edges, v, side="left")) for v in values]


def run_cv(samples: Sequence, recipe: Recipe, k: int = 5, seed: int = 0,
           n_boot: int = 2000, config_hash: str = "", threshold: float = 0.5) -> EvalReport:
    """Stratified k-fold cross-validation with pooled metrics and CIs.

    Classification stratifies on the label, regression on quartile buckets
    of the target score. Fold training failures are recorded; pooled
    metrics are only computed when every fold succeeded.
    """
    samples = list(samples)
    by_id = {s.subject_id: s for s in samples}
    if len(by_id) != len(samples):
        raise DegenerateDataError("duplicate subject ids in dataset")
    if recipe.task == "classification":
        strata = [s.label for s in samples]
        strict = True
    else:
        strata = _quartile_buckets([s.score for s in samples])
        strict = False
    folds = stratified_kfold([s.subject_id for s in samples], strata, k=k,
                             seed=seed, strict=strict)

    report = EvalReport(task=recipe.task, recipe=recipe.name,
                        config_hash=config_hash, seed=seed, k=k, n_boot=n_boot)
    pooled: dict[str, tuple] = {}
    any_failed = False
    for fold_idx, test_ids in enumerate(folds):
        test_set = set(test_ids)
        train = [s for s in samples if s.subject_id not in test_set]
        test = [by_id[sid] for sid in test_ids]
        try:
            fitted = recipe.fit(train, seed=seed * 1000 + fold_idx)
        except Exception as exc:  # noqa: BLE001 - fold failure is reported, not fatal
            logger.warning("fold %d failed to train: %s", fold_idx, exc)
            report.folds.append({"fold": fold_idx, "test_ids": test_ids,
                                 "failed": str(exc), "metrics": None})
            any_failed = True
            continue
        fold_outcomes = {}
        for sample in test:
            pred = float(recipe.predict(fitted, sample))
            truth = sample.label if recipe.task == "classification" else sample.score
            fold_outcomes[sample.subject_id] = (truth, pred)
            pooled[sample.subject_id] = (truth, pred)
        truths = [v[0] for v in fold_outcomes.values()]
        preds = [v[1] for v in fold_outcomes.values()]
        if recipe.task == "classification":
            metrics = classification_metrics(truths, preds, threshold).to_dict()
        else:
            metrics = regression_metrics(truths, preds).to_dict()
        report.folds.append({"fold": fold_idx, "test_ids": test_ids,
                             "failed": None, "metrics": metrics})

    for sid in sorted(pooled):
        truth, pred = pooled[sid]
        key = "label" if recipe.task == "classification" else "score"
        value_key = "prob" if recipe.task == "classification" else "prediction"
        report.predictions.append({"id": sid, key: truth, value_key: pred})

    if not any_failed:
        outcomes = [pooled[sid] for sid in sorted(pooled)]
        truths = [o[0] for o in outcomes]
        preds = [o[1] for o in outcomes]
        stats = (classification_stats(threshold) if recipe.task == "classification"
                 else REGRESSION_STATS)
        if recipe.task == "classification":
            report.pooled = classification_metrics(truths, preds, threshold).to_dict()
        else:
            report.pooled = regression_metrics(truths, preds).to_dict()
        report.ci = {}
        for name, stat in stats.items():
            try:
                report.ci[name] = list(bootstrap_ci(outcomes, stat, n_boot=n_boot,
                                                    seed=seed))
            except (DegenerateDataError, UndefinedMetricError):
                report.ci[name] = None
    return report
