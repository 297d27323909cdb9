"""Sentiment regression metrics on the [-3, 3] intensity scale."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

FIELDS = ("Acc2_NN", "Acc2_NP", "F1_NN", "F1_NP", "Acc3", "Acc5", "Acc7", "MAE", "Corr")


@dataclass
class MetricReport:
    Acc2_NN: float
    Acc2_NP: float | None  # undefined when every label is zero
    F1_NN: float
    F1_NP: float | None
    Acc3: float
    Acc5: float
    Acc7: float
    MAE: float
    Corr: float | None  # undefined when preds or labels are constant
    n: int
    n_np: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def weighted_f1(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """Support-weighted F1 over the classes present in ``y_true``."""
    total = 0.0
    classes = np.unique(y_true)
    for c in classes:
        tp = np.sum((y_pred == c) & (y_true == c))
        fp = np.sum((y_pred == c) & (y_true != c))
        fn = np.sum((y_pred != c) & (y_true == c))
        f1 = 0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn)
        total += f1 * np.sum(y_true == c)
    return float(total / len(y_true))


def _bucket_accuracy(preds: np.ndarray, labels: np.ndarray, lo: float, hi: float) -> float:
    return float(np.mean(np.round(np.clip(preds, lo, hi)) == np.round(np.clip(labels, lo, hi))))


def _three_class(x: np.ndarray) -> np.ndarray:
    return np.sign(np.round(np.clip(x, -1.0, 1.0)))


def pearson(preds: np.ndarray, labels: np.ndarray) -> float | None:
    dp, dl = preds - preds.mean(), labels - labels.mean()
    denom = np.sqrt((dp * dp).sum() * (dl * dl).sum())
    if denom == 0.0:
        return None
    return float(np.clip((dp * dl).sum() / denom, -1.0, 1.0))


def msa_metrics(preds, labels) -> MetricReport:
    """Binary accuracy/F1 with zeros counted as non-negative (NN) or dropped (NP), bucket accuracies, MAE, Pearson r.

    Acc7 and Acc5 round the clamped values to integers in [-3, 3] and [-2, 2];
    Acc3 buckets into negative / neutral / positive after rounding within [-1, 1].
    """
    preds = np.asarray(preds, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels, dtype=np.float64).reshape(-1)
    if preds.shape != labels.shape:
        raise ValueError(f"preds ({preds.size}) and labels ({labels.size}) differ in length")
    if preds.size < 2:
        raise ValueError("metrics need at least two samples")
    if not (np.isfinite(preds).all() and np.isfinite(labels).all()):
        raise ValueError("non-finite predictions or labels")

    nn_true, nn_pred = labels >= 0, preds >= 0
    keep = labels != 0
    np_true, np_pred = labels[keep] > 0, preds[keep] > 0
    has_np = bool(keep.any())
    return MetricReport(
        Acc2_NN=float(np.mean(nn_true == nn_pred)),
        Acc2_NP=float(np.mean(np_true == np_pred)) if has_np else None,
        F1_NN=weighted_f1(nn_true, nn_pred),
        F1_NP=weighted_f1(np_true, np_pred) if has_np else None,
        Acc3=float(np.mean(_three_class(preds) == _three_class(labels))),
        Acc5=_bucket_accuracy(preds, labels, -2.0, 2.0),
        Acc7=_bucket_accuracy(preds, labels, -3.0, 3.0),
        MAE=float(np.mean(np.abs(preds - labels))),
        Corr=pearson(preds, labels),
        n=int(preds.size),
        n_np=int(keep.sum()),
    )
