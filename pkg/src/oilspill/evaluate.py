"""Detection quality metrics: rank AUC and detection precision.

AUC is the Mann-Whitney rank statistic (ties count one half), identical to
integrating the ROC curve over all thresholds but O(n log n); it depends only
on the ordering of the scores.  Detection precision is TP / (TP + FP) over a
binary map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingleClassTruth, SizeMismatch


@dataclass(frozen=True)
class EvalReport:
    auc: float
    dp: float
    tp: int
    fp: int
    tn: int
    fn: int
    no_positive_detections: bool = False

    def to_dict(self) -> dict:
        return {
            "auc": None if np.isnan(self.auc) else float(self.auc),
            "dp": float(self.dp),
            "counts": {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn},
            "no_positive_detections": self.no_positive_detections,
        }


def auc(scores, truth) -> float:
    """Rank AUC of continuous scores against a binary reference."""
    s = _flat(scores)
    t = _flat(truth) > 0.5
    if s.shape != t.shape:
        raise SizeMismatch("scores and truth differ in size")
    n_pos = int(t.sum())
    n_neg = len(t) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassTruth("reference must contain both classes")

    ranks = _average_ranks(s)
    pos_rank_sum = float(ranks[t].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def detection_precision(detection, truth) -> EvalReport:
    """Confusion counts and TP / (TP + FP) for a binary detection map.

    With no positive detections DP is defined as 0 and flagged.  The AUC slot
    is NaN; fill it separately when a continuous map is available.
    """
    d = _flat(detection) > 0.5
    t = _flat(truth) > 0.5
    if d.shape != t.shape:
        raise SizeMismatch("detection and truth differ in size")

    tp = int(np.sum(d & t))
    fp = int(np.sum(d & ~t))
    tn = int(np.sum(~d & ~t))
    fn = int(np.sum(~d & t))
    flagged = (tp + fp) == 0
    dp = 0.0 if flagged else tp / (tp + fp)
    return EvalReport(auc=float("nan"), dp=dp, tp=tp, fp=fp, tn=tn, fn=fn,
                      no_positive_detections=flagged)


def evaluate_maps(scores, detection, truth) -> EvalReport:
    """Full report: AUC from the continuous map, DP from the binary map."""
    report = detection_precision(detection, truth)
    return EvalReport(
        auc=auc(scores, truth),
        dp=report.dp,
        tp=report.tp,
        fp=report.fp,
        tn=report.tn,
        fn=report.fn,
        no_positive_detections=report.no_positive_detections,
    )


def count_isolated_positives(detection) -> int:
    """Positive pixels none of whose 4-neighbors is positive."""
    d = np.asarray(getattr(detection, "values", detection)) > 0.5
    if d.ndim != 2:
        raise ValueError("detection map must be 2-D")
    padded = np.zeros((d.shape[0] + 2, d.shape[1] + 2), dtype=bool)
    padded[1:-1, 1:-1] = d
    neighbors = (
        padded[:-2, 1:-1] | padded[2:, 1:-1] | padded[1:-1, :-2] | padded[1:-1, 2:]
    )
    return int(np.sum(d & ~neighbors))


def _flat(field_or_array) -> np.ndarray:
    values = getattr(field_or_array, "values", field_or_array)
    return np.asarray(values, dtype=np.float64).ravel()


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with tied values sharing their group's average rank."""
    order = np.argsort(values, kind="stable")
    ordered = values[order]
    n = len(values)
    boundaries = np.flatnonzero(np.diff(ordered)) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [n]))
    group_rank = (starts + ends - 1) / 2.0 + 1.0
    ranks = np.empty(n)
    ranks[order] = np.repeat(group_rank, ends - starts)
    return ranks
