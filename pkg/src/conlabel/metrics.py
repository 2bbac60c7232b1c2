"""Accuracy, confusion matrices, one-vs-rest ROC curves and class-balance CV."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .data import Instance
from .exceptions import DegenerateTruth, EmptySet, EmptyTestSet

logger = logging.getLogger(__name__)


@dataclass
class RocCurve:
    class_id: int
    fpr: list[float]
    tpr: list[float]
    auc: float

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr, self.tpr))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["fpr", "tpr"])
        writer.writerows((repr(f), repr(t)) for f, t in self.points)
        return buf.getvalue()


@dataclass
class MetricsReport:
    accuracy: float
    confusion: np.ndarray
    rocs: list[RocCurve]
    class_count_cv: float
    precision: np.ndarray
    recall: np.ndarray

    @property
    def n_samples(self) -> int:
        return int(self.confusion.sum())

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "n_samples": self.n_samples,
            "confusion": self.confusion.tolist(),
            "precision": self.precision.tolist(),
            "recall": self.recall.tolist(),
            "class_count_cv": self.class_count_cv,
            "auc": {str(r.class_id): r.auc for r in self.rocs},
        }


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    """Counts with true classes on rows and predictions on columns."""
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)), 1)
    return cm


def roc_one_vs_rest(scores, truth, class_id: int = 0) -> RocCurve:
    """ROC staircase over distinct score thresholds, AUC by trapezoids.

    Instances sharing a score move the curve in a single (possibly
    diagonal) step, which makes the area equal the probability that a
    random positive outscores a random negative, ties counting one half.
    """
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth).astype(bool)
    n_pos = int(truth.sum())
    n_neg = int(truth.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise DegenerateTruth(f"class {class_id}: need both positives and negatives")
    order = np.argsort(-scores, kind="mergesort")
    s, t = scores[order], truth[order]
    # last index of each run of equal scores
    group_end = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(t)[group_end]
    fp = (group_end + 1) - tp
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(class_id, fpr.tolist(), tpr.tolist(), auc)


def class_counts(labels, n_classes: int) -> np.ndarray:
    return np.bincount(np.asarray(labels, dtype=np.int64), minlength=n_classes)


def class_count_cv(counts) -> float:
    """Coefficient of variation of per-class counts, in percent.

    Uses the population standard deviation; zero-count classes are part of
    the population.
    """
    counts = np.asarray(counts, dtype=np.float64)
    if counts.size == 0 or counts.sum() == 0:
        raise EmptySet("class_count_cv of an empty set")
    return float(100.0 * counts.std() / counts.mean())


def format_percent(value: float) -> str:
    return f"{value:.1f}%"


def label_error_rate(instances: Sequence[Instance]) -> float | None:
    """Share of attributable instances whose assigned label is wrong.

    Instances without ground truth or marked unattributable are left out of
    the denominator; returns None when nothing is left.
    """
    judged = [i for i in instances if i.is_attributable]
    if not judged:
        return None
    wrong = sum(1 for i in judged if i.assigned_label != i.true_label)
    return wrong / len(judged)


def evaluate(model, X, y, n_classes: int | None = None) -> MetricsReport:
    """Score a fitted classifier on a labeled test set."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(y) == 0:
        raise EmptyTestSet("test set is empty")
    probs = np.asarray(model.predict_proba(X))
    K = n_classes or probs.shape[1]
    pred = np.argmax(probs, axis=1)
    cm = confusion_matrix(y, pred, K)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.nan_to_num(np.diag(cm) / cm.sum(axis=0))
        recall = np.nan_to_num(np.diag(cm) / cm.sum(axis=1))
    rocs = []
    for k in range(K):
        try:
            rocs.append(roc_one_vs_rest(probs[:, k], y == k, k))
        except DegenerateTruth:
            logger.info("no ROC for class %d: test set lacks positives or negatives", k)
    return MetricsReport(
        accuracy=float(np.trace(cm) / cm.sum()),
        confusion=cm,
        rocs=rocs,
        class_count_cv=class_count_cv(class_counts(y, K)),
        precision=precision,
        recall=recall,
    )


# --------------------------------------------------------------------------
# baseline comparison
# --------------------------------------------------------------------------

BASELINE_ORDER = ("lower", "mid", "upper", "ssl")


@dataclass
class BaselineRow:
    name: str
    training_set: str
    accuracy: float
    set_size: int
    set_cv: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class BaselineReport:
    rows: list[BaselineRow]
    reports: dict[str, MetricsReport] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def row(self, name: str) -> BaselineRow:
        return next(r for r in self.rows if r.name == name)

    def to_dict(self) -> dict:
        return {
            "meta": self.meta,
            "table": [r.to_dict() for r in self.rows],
            "metrics": {name: rep.to_dict() for name, rep in self.reports.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "BaselineReport":
        return cls(rows=[BaselineRow(**r) for r in doc["table"]], meta=doc.get("meta", {}))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["model", "training_set", "accuracy_pct", "set_size", "set_cv_pct"])
        for r in self.rows:
            writer.writerow([r.name, r.training_set, f"{100 * r.accuracy:.1f}", r.set_size, f"{r.set_cv:.1f}"])
        return buf.getvalue()

    def format_table(self) -> str:
        lines = [f"{'model':<6} {'set':<5} {'accuracy':>9} {'size':>6} {'CV':>7}"]
        for r in self.rows:
            lines.append(
                f"{r.name:<6} {r.training_set:<5} {format_percent(100 * r.accuracy):>9} "
                f"{r.set_size:>6} {format_percent(r.set_cv):>7}"
            )
        return "\n".join(lines)


def baseline_report(
    make_model,
    training_sets: Mapping[str, tuple[str, np.ndarray, np.ndarray]],
    X_test,
    y_test,
    n_classes: int,
    X_val=None,
    y_val=None,
) -> BaselineReport:
    """Train one model per training set and score each on the same test set.

    ``make_model()`` must return a fresh, identically configured estimator.
    ``training_sets`` maps a row name (lower/mid/upper/ssl) to
    ``(set_name, X, y)``.
    """
    rows, reports = [], {}
    names = [n for n in BASELINE_ORDER if n in training_sets]
    names += [n for n in training_sets if n not in BASELINE_ORDER]
    for name in names:
        set_name, X, y = training_sets[name]
        model = make_model()
        model.fit(X, y, X_val, y_val)
        rep = evaluate(model, X_test, y_test, n_classes)
        reports[name] = rep
        rows.append(
            BaselineRow(name, set_name, rep.accuracy, int(len(y)), class_count_cv(class_counts(y, n_classes)))
        )
        logger.info("baseline %s (%s, n=%d): accuracy %.4f", name, set_name, len(y), rep.accuracy)
    return BaselineReport(rows, reports)
