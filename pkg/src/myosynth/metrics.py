"""Pixel- and instance-level segmentation evaluation.

Instance matching is one-to-one and optimal (Hungarian assignment on the
thresholded IoU table, maximizing match count first and total IoU second);
AP at a threshold is TP / (TP + FP + FN), the matched-instance convention
used by cell segmentation benchmarks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass
class PixelMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float


@dataclass
class InstanceMatchResult:
    iou_threshold: float
    matches: list = field(default_factory=list)  # (gt_id, pred_id, iou)
    tp: int = 0
    fp: int = 0
    fn: int = 0
    ap: float = 0.0


def pixel_metrics(gt, pred) -> PixelMetrics:
    """Confusion-matrix metrics over the foreground class; 0/0 -> 0."""
    g = np.asarray(gt).astype(bool)
    p = np.asarray(pred).astype(bool)
    if g.shape != p.shape:
        raise ValueError("gt and pred dimensions differ")
    tp = int((g & p).sum())
    fp = int((~g & p).sum())
    fn = int((g & ~p).sum())
    tn = int((~g & ~p).sum())
    total = tp + fp + fn + tn
    acc = (tp + tn) / total if total else 0.0
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    return PixelMetrics(acc, prec, rec, f1)


def _iou_table(gt: np.ndarray, pred: np.ndarray):
    """IoU for every intersecting (gt, pred) label pair via one joint
    histogram pass; returns (gt_ids, pred_ids, iou_matrix)."""
    gt_ids, gt_inv = np.unique(gt, return_inverse=True)
    pred_ids, pred_inv = np.unique(pred, return_inverse=True)
    joint = np.zeros((gt_ids.size, pred_ids.size), dtype=np.int64)
    np.add.at(joint, (gt_inv.ravel(), pred_inv.ravel()), 1)
    gt_area = joint.sum(axis=1)
    pred_area = joint.sum(axis=0)
    keep_g = gt_ids != 0
    keep_p = pred_ids != 0
    inter = joint[keep_g][:, keep_p].astype(np.float64)
    ga = gt_area[keep_g].astype(np.float64)
    pa = pred_area[keep_p].astype(np.float64)
    union = ga[:, None] + pa[None, :] - inter
    iou = np.where(union > 0, inter / np.maximum(union, 1.0), 0.0)
    return gt_ids[keep_g], pred_ids[keep_p], iou


def match_instances(gt_labels, pred_labels,
                    iou_threshold: float) -> InstanceMatchResult:
    """Optimal one-to-one matching at the given IoU threshold.

    ap = tp / (tp + fp + fn); when both images are empty the result is the
    0/0 -> 1 convention.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError("iou_threshold must be in (0, 1]")
    gt = np.asarray(gt_labels)
    pred = np.asarray(pred_labels)
    if gt.shape != pred.shape:
        raise ValueError("gt and pred dimensions differ")
    gids, pids, iou = _iou_table(gt, pred)
    n_gt, n_pred = gids.size, pids.size
    result = InstanceMatchResult(iou_threshold=float(iou_threshold))
    if n_gt == 0 and n_pred == 0:
        result.ap = 1.0
        return result
    if n_gt == 0 or n_pred == 0 or not (iou >= iou_threshold).any():
        result.fp = n_pred
        result.fn = n_gt
        result.ap = 0.0
        return result
    # maximize match count, then total IoU: eligible pairs get a unit bonus
    # plus a strictly-sub-unit IoU tie-breaker
    eligible = iou >= iou_threshold
    n = min(n_gt, n_pred)
    cost = -(eligible.astype(np.float64) + iou / (2.0 * n + 1.0))
    rows, cols = linear_sum_assignment(cost)
    for r, c in zip(rows, cols):
        if eligible[r, c]:
            result.matches.append((int(gids[r]), int(pids[c]),
                                   float(iou[r, c])))
    result.matches.sort()
    result.tp = len(result.matches)
    result.fp = n_pred - result.tp
    result.fn = n_gt - result.tp
    result.ap = result.tp / (result.tp + result.fp + result.fn)
    return result


def sweep_thresholds() -> list[float]:
    """The canonical IoU grid 0.50, 0.55, ..., 1.00."""
    return [round(0.5 + 0.05 * k, 2) for k in range(11)]


def ap_sweep(gt_labels, pred_labels) -> list[InstanceMatchResult]:
    """match_instances at every threshold of the canonical grid."""
    return [match_instances(gt_labels, pred_labels, t)
            for t in sweep_thresholds()]


def mean_ap(results: list[InstanceMatchResult]) -> float:
    return float(np.mean([r.ap for r in results])) if results else 0.0


def metrics_report(gt_mask, pred_mask, gt_labels, pred_labels) -> dict:
    """Bundle pixel metrics and the AP sweep into the metrics.json layout."""
    pm = pixel_metrics(gt_mask, pred_mask)
    sweep = ap_sweep(gt_labels, pred_labels)
    return {
        "pixel": {"accuracy": pm.accuracy, "precision": pm.precision,
                  "recall": pm.recall, "f1": pm.f1},
        "instance": {
            "per_threshold": [
                {"iou": r.iou_threshold, "ap": r.ap, "tp": r.tp,
                 "fp": r.fp, "fn": r.fn} for r in sweep],
            "mean_ap": mean_ap(sweep),
        },
    }
