from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # rows: true class, cols: predicted class

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)


def confusion(preds, labels, n_classes: int) -> ConfusionMatrix:
    preds = np.asarray(preds, dtype=np.int64).reshape(-1)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if preds.shape != labels.shape:
        raise ValueError("preds and labels differ in length")
    for name, v in (("preds", preds), ("labels", labels)):
        if v.size and (v.min() < 0 or v.max() >= n_classes):
            raise ValueError(f"{name} outside [0, {n_classes})")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (labels, preds), 1)
    return ConfusionMatrix(counts)


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise ValueError("accuracy of an empty confusion matrix")
    return float(np.trace(cm.counts) / cm.total)


def _safe_ratio(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def precision_recall_f1(cm: ConfusionMatrix, average: str = "macro") -> dict:
    """Per-class precision, recall and F1 plus their ``average``.

    A zero denominator yields 0 for that class; such classes are listed under
    ``undefined``. ``average`` is ``macro`` (default), ``weighted`` or ``micro``.
    """
    c = cm.counts
    tp = np.diag(c).astype(np.float64)
    fp = c.sum(axis=0) - tp
    fn = c.sum(axis=1) - tp
    precision = _safe_ratio(tp, tp + fp)
    recall = _safe_ratio(tp, tp + fn)
    f1 = _safe_ratio(2 * precision * recall, precision + recall)
    undefined = sorted(set(np.flatnonzero(tp + fp == 0).tolist()) | set(np.flatnonzero(tp + fn == 0).tolist()))

    if average == "macro":
        avg = precision.mean(), recall.mean(), f1.mean()
    elif average == "weighted":
        support = c.sum(axis=1)
        w = support / support.sum() if support.sum() else np.zeros_like(tp)
        avg = (precision * w).sum(), (recall * w).sum(), (f1 * w).sum()
    elif average == "micro":
        p = _safe_ratio(tp.sum(), tp.sum() + fp.sum())
        r = _safe_ratio(tp.sum(), tp.sum() + fn.sum())
        avg = p, r, _safe_ratio(2 * p * r, p + r)
    else:
        raise ValueError(f"unknown average {average!r}")
    return {
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "avg_precision": float(avg[0]),
        "avg_recall": float(avg[1]),
        "avg_f1": float(avg[2]),
        "undefined": undefined,
    }


def report(cm: ConfusionMatrix, class_names=None, average: str = "macro") -> dict:
    """JSON-ready summary with the four metrics, per-class rows and the matrix."""
    prf = precision_recall_f1(cm, average)
    names = class_names or [str(k) for k in range(cm.n_classes)]
    per_class = [
        {
            "class": names[k],
            "precision": float(prf["precision"][k]),
            "recall": float(prf["recall"][k]),
            "f1": float(prf["f1"][k]),
            "support": int(cm.counts[k].sum()),
            "undefined": k in prf["undefined"],
        }
        for k in range(cm.n_classes)
    ]
    out = {
        "accuracy": accuracy(cm),
        f"{average}_precision": prf["avg_precision"],
        f"{average}_recall": prf["avg_recall"],
        f"{average}_f1": prf["avg_f1"],
        "per_class": per_class,
        "confusion": cm.counts.tolist(),
    }
    return out
