"""Classification metrics and inter-annotator agreement.

AUROC uses the pair-counting (Mann-Whitney) formulation with ties counted
as half, computed exactly via sorted search rather than an explicit pair
loop. Undefined metrics (single-class AUROC) are reported as None, never
coerced to zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


def auroc(scores: Sequence[float], labels: Sequence[int]) -> float | None:
    """Probability that a random positive outscores a random negative.

    Ties count 0.5. Returns None when only one class is present.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError(f"scores and labels must be 1-D and aligned, got {s.shape} vs {y.shape}")
    pos = s[y == 1]
    neg = np.sort(s[y == 0])
    if len(pos) == 0 or len(neg) == 0:
        return None
    below = np.searchsorted(neg, pos, side="left")
    below_or_equal = np.searchsorted(neg, pos, side="right")
    wins = int(below.sum())
    ties = int((below_or_equal - below).sum())
    return (wins + 0.5 * ties) / (len(pos) * len(neg))


@dataclass(frozen=True)
class PRF1:
    precision: float
    recall: float
    f1: float
    precision_defined: bool = True


def prf1(probabilities: Sequence[float], labels: Sequence[int], threshold: float = 0.5) -> PRF1:
    """Precision/recall/F1 at a probability threshold.

    0/0 conventions: precision with no positive predictions is 0 with
    ``precision_defined`` False; recall with no positives is 0; F1 is 0
    when precision + recall is 0.
    """
    p = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(labels)
    predicted = p >= threshold
    actual = y == 1
    tp = int(np.sum(predicted & actual))
    fp = int(np.sum(predicted & ~actual))
    fn = int(np.sum(~predicted & actual))
    precision_defined = (tp + fp) > 0
    precision = tp / (tp + fp) if precision_defined else 0.0
    recall = tp / (tp + fn) if (tp + fn) > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return PRF1(precision=precision, recall=recall, f1=f1, precision_defined=precision_defined)


def fleiss_kappa(table: Sequence[Sequence[int]]) -> float:
    """Fleiss' kappa over an items-by-categories count table.

    Every row must sum to the same rater count n >= 2. Returns exactly 1.0
    under perfect agreement.
    """
    counts = np.asarray(table, dtype=np.float64)
    if counts.ndim != 2 or counts.shape[0] < 1 or counts.shape[1] < 2:
        raise ValueError(f"need an N x k table with k >= 2, got shape {counts.shape}")
    row_sums = counts.sum(axis=1)
    n = row_sums[0]
    if n < 2:
        raise ValueError(f"need at least 2 raters per item, got {n}")
    if not np.all(row_sums == n):
        raise ValueError(f"inconsistent row sums: {row_sums.tolist()}")
    n_items = counts.shape[0]
    per_item_agreement = (np.sum(counts * counts, axis=1) - n) / (n * (n - 1))
    observed = float(per_item_agreement.mean())
    category_shares = counts.sum(axis=0) / (n_items * n)
    expected = float(np.sum(category_shares * category_shares))
    if observed == 1.0:
        return 1.0
    return (observed - expected) / (1.0 - expected)


def macro_auroc(probabilities: np.ndarray, labels: np.ndarray) -> float | None:
    """Mean of per-column AUROCs, skipping single-class columns.

    ``probabilities`` and ``labels`` are (examples, conditions) matrices.
    Returns None when no column has both classes.
    """
    probs = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(labels)
    values = [auroc(probs[:, i], y[:, i]) for i in range(probs.shape[1])]
    defined = [v for v in values if v is not None]
    return sum(defined) / len(defined) if defined else None
