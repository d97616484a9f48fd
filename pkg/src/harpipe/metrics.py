"""Binary classification metrics: AUROC, macro F1, accuracy.

The AUROC here is the exact pairwise statistic (probability that a
random positive outscores a random negative, ties counting half),
computed via the trapezoidal ROC integral over tie-grouped thresholds.
"""

from __future__ import annotations

import numpy as np


def _check_binary(labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels)
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError("labels must be 0/1")
    return labels.astype(np.int64)


def auroc(scores, labels) -> float:
    """Area under the ROC curve, trapezoidal over distinct thresholds.

    Equals the mean over (positive, negative) pairs of 1 / 0.5 / 0 for
    win / tie / loss. Raises ValueError when only one class is present.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = _check_binary(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise ValueError(f"{scores.shape[0]} scores vs {labels.shape[0]} labels")
    n_pos = int(labels.sum())
    n_neg = labels.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC needs both classes present")

    order = np.argsort(-scores, kind="stable")
    y = labels[order]
    s = scores[order]
    # one ROC vertex per distinct score (tie groups collapse)
    boundary = np.nonzero(np.diff(s))[0]
    idx = np.r_[boundary, s.shape[0] - 1]
    tp = np.cumsum(y)[idx]
    fp = (idx + 1) - tp
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    return float(np.trapezoid(tpr, fpr))


def _f1(tp: int, fp: int, fn: int) -> float:
    # zero predicted and zero actual positives -> 0 by convention
    denom = 2 * tp + fp + fn
    if denom == 0:
        return 0.0
    return 2 * tp / denom


def f1_macro(predictions, labels) -> float:
    """Unweighted mean of the F1 scores of the two classes."""
    predictions = _check_binary(predictions).reshape(-1)
    labels = _check_binary(labels).reshape(-1)
    if predictions.shape != labels.shape:
        raise ValueError(
            f"{predictions.shape[0]} predictions vs {labels.shape[0]} labels"
        )
    tp = int(np.sum((predictions == 1) & (labels == 1)))
    fp = int(np.sum((predictions == 1) & (labels == 0)))
    fn = int(np.sum((predictions == 0) & (labels == 1)))
    tn = int(np.sum((predictions == 0) & (labels == 0)))
    f1_pos = _f1(tp, fp, fn)
    f1_neg = _f1(tn, fn, fp)  # negatives as the "positive" class
    return (f1_pos + f1_neg) / 2.0


def accuracy(predictions, labels) -> float:
    """Fraction of matching entries."""
    predictions = np.asarray(predictions).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if predictions.shape != labels.shape:
        raise ValueError(
            f"{predictions.shape[0]} predictions vs {labels.shape[0]} labels"
        )
    if predictions.shape[0] == 0:
        raise ValueError("empty inputs")
    return float(np.mean(predictions == labels))
