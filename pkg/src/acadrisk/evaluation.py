"""ROC/AUC, confusion-matrix metrics and stratified splitting."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainError, SingleClassError


def _validate(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise DomainError("scores and labels must be 1-D and of equal length")
    if not np.isin(labels, (0, 1)).all():
        raise DomainError("labels must be 0 or 1")
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == len(labels):
        raise SingleClassError("ROC analysis needs both classes")
    return scores, labels


def auc(scores, labels) -> float:
    """Mann-Whitney AUC: share of (positive, negative) pairs ranked correctly, ties half."""
    scores, labels = _validate(scores, labels)
    pos = np.sort(scores[labels == 1])
    neg = np.sort(scores[labels == 0])
    below = np.searchsorted(neg, pos, side="left")
    tied = np.searchsorted(neg, pos, side="right") - below
    # integer pair counts, so the division is the only rounding step
    wins2 = int(2 * below.sum() + tied.sum())
    return wins2 / (2 * len(pos) * len(neg))


def auc_pairs(scores, labels) -> float:
    """Brute-force O(n_pos * n_neg) pair counting; kept as an independent oracle."""
    scores, labels = _validate(scores, labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    diff = pos[:, None] - neg[None, :]
    return float((np.sum(diff > 0) + 0.5 * np.sum(diff == 0)) / diff.size)


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray

    @property
    def points(self) -> list:
        return list(zip(self.fpr.tolist(), self.tpr.tolist(), self.thresholds.tolist()))

    @property
    def auc(self) -> float:
        return trapezoid_area(self.fpr, self.tpr)

    def write_csv(self, fh) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["threshold", "fpr", "tpr"])
        for f, t, th in self.points:
            writer.writerow([repr(th), repr(f), repr(t)])


def trapezoid_area(fpr, tpr) -> float:
    fpr = np.asarray(fpr, dtype=np.float64)
    tpr = np.asarray(tpr, dtype=np.float64)
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def roc_curve(scores, labels) -> RocCurve:
    """ROC points over distinct scores, highest first, from (0, 0) to (1, 1).

    The first threshold is ``+inf`` (nothing predicted positive).  Tied
    scores collapse into a single point.
    """
    scores, labels = _validate(scores, labels)
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], labels[order]
    last = np.r_[np.nonzero(np.diff(s))[0], len(s) - 1]
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    n_pos, n_neg = int(labels.sum()), int(len(labels) - labels.sum())
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    thresholds = np.r_[np.inf, s[last]]
    return RocCurve(fpr, tpr, thresholds)


def youden_threshold(curve: RocCurve) -> float:
    """Threshold maximising ``tpr - fpr`` (first on ties)."""
    j = curve.tpr - curve.fpr
    return float(curve.thresholds[int(np.argmax(j))])


@dataclass
class EvalReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    auc: float = float("nan")
    confusion: dict = field(default_factory=dict)
    threshold: float = 0.5
    split_descriptor: str = ""
    zero_division: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def classification_metrics(scores, labels, threshold: float = 0.5) -> EvalReport:
    """Confusion-matrix metrics with risk (1) as the positive class.

    Zero denominators give 0 and are listed in ``zero_division``.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64)
    if scores.shape != labels.shape:
        raise DomainError("scores and labels differ in shape")
    pred = scores >= threshold
    tp = int(np.sum(pred & (labels == 1)))
    fp = int(np.sum(pred & (labels == 0)))
    tn = int(np.sum(~pred & (labels == 0)))
    fn = int(np.sum(~pred & (labels == 1)))
    flagged = []

    def ratio(num, den, name):
        if den == 0:
            flagged.append(name)
            return 0.0
        return num / den

    accuracy = ratio(tp + tn, tp + tn + fp + fn, "accuracy")
    precision = ratio(tp, tp + fp, "precision")
    recall = ratio(tp, tp + fn, "recall")
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    if precision + recall == 0:
        flagged.append("f1")
    return EvalReport(accuracy, precision, recall, f1,
                      confusion={"tp": tp, "fp": fp, "tn": tn, "fn": fn},
                      threshold=threshold, zero_division=flagged)


def stratified_split(cohort, test_fraction: float, seed: int):
    """Split a cohort per class so both parts keep the class ratio.

    Each class contributes ``round(test_fraction * class_size)`` rows (at
    least one, at most all but one) to the test part.
    """
    if not 0 < test_fraction < 1:
        raise DomainError("test_fraction must lie in (0, 1)")
    y = np.asarray(cohort.y)
    rng = np.random.default_rng(seed)
    test = []
    for cls in (0, 1):
        members = np.nonzero(y == cls)[0]
        if len(members) < 2:
            raise DomainError(f"class {cls} has {len(members)} members; stratification needs 2")
        k = min(max(int(round(test_fraction * len(members))), 1), len(members) - 1)
        test.extend(rng.permutation(members)[:k].tolist())
    test_rows = np.sort(np.array(test, dtype=np.int64))
    train_rows = np.setdiff1d(np.arange(len(y)), test_rows)
    return cohort.subset(train_rows), cohort.subset(test_rows)


def summarize_runs(reports) -> dict:
    """Mean and sample standard deviation of headline metrics across runs."""
    keys = ("accuracy", "precision", "recall", "f1", "auc")
    out = {}
    for k in keys:
        vals = np.array([getattr(r, k) for r in reports], dtype=np.float64)
        out[k] = {"mean": float(vals.mean()),
                  "sd": float(vals.std(ddof=1)) if len(vals) > 1 else 0.0}
    return out


def evaluate_protocol(cohort, fit, n_runs: int = 5, test_fraction: float = 0.25,
                      threshold: float = 0.5, seed: int = 0):
    """Repeated stratified hold-out evaluation.

    ``fit(train_cohort)`` must return an object with ``predict_proba(X)``.
    Runs use split seeds ``seed .. seed + n_runs - 1``.  Returns the JSON-ready
    summary and the list of ``(EvalReport, RocCurve)`` pairs.
    """
    if n_runs < 1:
        raise DomainError("n_runs must be >= 1")
    reports = []
    for run_seed in range(seed, seed + n_runs):
        train, test = stratified_split(cohort, test_fraction, run_seed)
        model = fit(train)
        p = model.predict_proba(test.X)
        rep = classification_metrics(p, test.y, threshold)
        curve = roc_curve(p, test.y)
        rep.auc = auc(p, test.y)
        rep.split_descriptor = (f"stratified hold-out, test_fraction={test_fraction}, "
                                f"seed={run_seed}, n_train={len(train)}, n_test={len(test)}")
        reports.append((rep, curve))
    return {
        "protocol": f"{n_runs} stratified {1 - test_fraction:g}/{test_fraction:g} splits, "
                    f"seeds {seed}..{seed + n_runs - 1}, threshold {threshold}",
        "runs": [r.to_dict() | {"youden_threshold": youden_threshold(c)} for r, c in reports],
        "summary": summarize_runs([r for r, _ in reports]),
    }, reports


def finite_json(obj):
    """Copy of ``obj`` with numpy scalars/arrays unwrapped and NaN/inf replaced by None."""
    if isinstance(obj, dict):
        return {str(k): finite_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [finite_json(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def save_json(obj, path) -> None:
    """Canonical (key-sorted) strict JSON."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(finite_json(obj), fh, sort_keys=True, indent=1, allow_nan=False)
        fh.write("\n")
