"""Threshold-free OoD evaluation metrics.

Convention throughout: in-distribution is the positive class and higher
scores mean more in-distribution; a threshold t classifies a sample as
ID iff score >= t.  All four metrics sweep the distinct attained score
values exactly (no binning), so they agree with brute-force oracles to
floating-point accuracy and are invariant under strictly increasing
score transforms.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
from scipy.stats import rankdata

from .errors import EvaluationError


def _checked(id_scores, ood_scores) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(id_scores, dtype=np.float64).ravel()
    b = np.asarray(ood_scores, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise EvaluationError("both ID and OoD score sets must be nonempty")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise EvaluationError("scores must be finite")
    return a, b


def _sweep_counts(a: np.ndarray, b: np.ndarray):
    """Distinct thresholds (descending) with #id >= t and #ood >= t."""
    ts = np.unique(np.concatenate([a, b]))[::-1]
    a_sorted = np.sort(a)
    b_sorted = np.sort(b)
    tp = a.size - np.searchsorted(a_sorted, ts, side="left")
    fp = b.size - np.searchsorted(b_sorted, ts, side="left")
    return ts, tp, fp


def fpr_at_tpr(id_scores, ood_scores, tpr: float = 0.95) -> float:
    """False-positive rate at the largest threshold with TPR >= ``tpr``."""
    a, b = _checked(id_scores, ood_scores)
    if not (0.0 < tpr <= 1.0):
        raise EvaluationError(f"tpr must be in (0, 1], got {tpr}")
    ts, tp, fp = _sweep_counts(a, b)
    ok = np.flatnonzero(tp / a.size >= tpr)
    i = ok[0]  # thresholds descend, so the first hit is the largest
    return float(fp[i] / b.size)


def auroc(id_scores, ood_scores) -> float:
    """Rank statistic P(id > ood) + 0.5 P(id = ood)."""
    a, b = _checked(id_scores, ood_scores)
    ranks = rankdata(np.concatenate([a, b]), method="average")
    u = ranks[: a.size].sum() - a.size * (a.size + 1) / 2.0
    return float(u / (a.size * b.size))


def aupr_in(id_scores, ood_scores) -> float:
    """Area under precision-recall (ID positive), step interpolation."""
    a, b = _checked(id_scores, ood_scores)
    _, tp, fp = _sweep_counts(a, b)
    recall = tp / a.size
    precision = tp / np.maximum(tp + fp, 1)
    prev = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev) * precision))


def detection_error(id_scores, ood_scores) -> float:
    """min over thresholds of 0.5 (1 - TPR) + 0.5 FPR (including +inf)."""
    a, b = _checked(id_scores, ood_scores)
    _, tp, fp = _sweep_counts(a, b)
    err = 0.5 * (1.0 - tp / a.size) + 0.5 * fp / b.size
    return float(min(err.min(), 0.5))  # 0.5 = reject-all endpoint


@dataclass
class EvalReport:
    """The four standard metrics plus the sample counts they used."""

    fpr_at_95tpr: float
    auroc: float
    aupr_in: float
    detection_error: float
    n_id: int
    n_ood: int

    def as_dict(self) -> dict:
        return asdict(self)

    def display(self) -> dict[str, str]:
        """Percentages at one decimal place, for table-style reporting."""
        return {
            "fpr_at_95tpr": f"{100.0 * self.fpr_at_95tpr:.1f}%",
            "auroc": f"{100.0 * self.auroc:.1f}%",
            "aupr_in": f"{100.0 * self.aupr_in:.1f}%",
            "detection_error": f"{100.0 * self.detection_error:.1f}%",
        }


def evaluate(id_scores, ood_scores, tpr: float = 0.95) -> EvalReport:
    a, b = _checked(id_scores, ood_scores)
    return EvalReport(
        fpr_at_95tpr=fpr_at_tpr(a, b, tpr),
        auroc=auroc(a, b),
        aupr_in=aupr_in(a, b),
        detection_error=detection_error(a, b),
        n_id=a.size,
        n_ood=b.size,
    )
