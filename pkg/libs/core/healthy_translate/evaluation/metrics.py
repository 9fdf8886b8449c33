"""
Detection and localization metrics.

Labels are 1 for anomalous and 0 for healthy. A sample is predicted anomalous iff its score is at
least the threshold.
"""

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np
import scipy.stats
import torch

from healthy_translate.composition import difference_map
from healthy_translate.datamodel import ScoreReduction, ThresholdRule

# pixel thresholds for localization, over the [0, 2] difference range
PIXEL_THRESHOLD_GRID = tuple(round(0.02 * i, 2) for i in range(1, 101))


def _as_arrays(scores: Sequence[float], labels: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError(f"Expected matching 1D scores and labels, got {s.shape} and {y.shape}")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("Labels must be 0 (healthy) or 1 (anomalous)")
    if not np.isfinite(s).all():
        raise ValueError("Scores must be finite")
    y = y.astype(bool)
    if y.all() or not y.any():
        raise ValueError("Both healthy and anomalous samples are required")
    return s, y


def reduce_difference(diff: torch.Tensor, reduction: ScoreReduction = ScoreReduction.mean) -> float:
    if reduction == ScoreReduction.max:
        return float(diff.max())
    return float(diff.mean())


def anomaly_score(
    x: torch.Tensor,
    translated: torch.Tensor,
    reduction: ScoreReduction = ScoreReduction.mean,
) -> float:
    """Mean (or max) over all pixels and channels of |x - translated|."""
    return reduce_difference(difference_map(x, translated), reduction)


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mann-Whitney statistic P(score_pos > score_neg) + P(tie) / 2, from midranks."""
    s, y = _as_arrays(scores, labels)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    ranks = scipy.stats.rankdata(s, method="average")
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


@dataclass
class ClassificationMetrics:
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    specificity: float
    f1: float
    undefined: List[str] = field(default_factory=list)


def _ratio(num: int, den: int, name: str, undefined: List[str]) -> float:
    if den == 0:
        undefined.append(name)
        return 0.0
    return num / den


def classification_metrics(
    scores: Sequence[float], labels: Sequence[int], threshold: float
) -> ClassificationMetrics:
    s, y = _as_arrays(scores, labels)
    predicted = s >= threshold
    tp = int((predicted & y).sum())
    fp = int((predicted & ~y).sum())
    fn = int((~predicted & y).sum())
    tn = int((~predicted & ~y).sum())
    undefined: List[str] = []
    precision = _ratio(tp, tp + fp, "precision", undefined)
    recall = _ratio(tp, tp + fn, "recall", undefined)
    specificity = _ratio(tn, tn + fp, "specificity", undefined)
    if precision + recall == 0:
        if "precision" not in undefined and "recall" not in undefined:
            undefined.append("f1")
        f1 = 0.0
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return ClassificationMetrics(tp, fp, fn, tn, precision, recall, specificity, f1, undefined)


@dataclass
class ThresholdChoice:
    threshold: float
    degenerate: bool = False


def threshold_candidates(scores: Sequence[float]) -> List[float]:
    """Midpoints between adjacent distinct sorted scores."""
    distinct = np.unique(np.asarray(scores, dtype=np.float64))
    return [float(v) for v in (distinct[:-1] + distinct[1:]) / 2]


def select_threshold(
    scores: Sequence[float],
    labels: Sequence[int],
    rule: ThresholdRule = ThresholdRule.f1,
) -> ThresholdChoice:
    """Best midpoint threshold under `rule` (F1, or Youden's J = recall + specificity - 1).

    Ties go to higher specificity, then to the larger threshold. When all scores are equal there is
    no midpoint: the common score is returned and flagged degenerate.
    """
    s, y = _as_arrays(scores, labels)
    candidates = threshold_candidates(s)
    if not candidates:
        return ThresholdChoice(threshold=float(s[0]), degenerate=True)

    best_key = None
    best_threshold = candidates[0]
    for t in candidates:
        m = classification_metrics(s, y.astype(int), t)
        objective = m.f1 if rule == ThresholdRule.f1 else m.recall + m.specificity - 1
        key = (objective, m.specificity, t)
        if best_key is None or key > best_key:
            best_key, best_threshold = key, t
    return ThresholdChoice(threshold=best_threshold)


def _dice_map(diff_map: np.ndarray | torch.Tensor) -> np.ndarray:
    if isinstance(diff_map, torch.Tensor):
        diff_map = diff_map.detach().cpu().numpy()
    diff_map = np.asarray(diff_map, dtype=np.float64)
    if diff_map.ndim == 3:
        diff_map = diff_map.mean(axis=0)
    if diff_map.ndim != 2:
        raise ValueError(f"Expected a (C, H, W) or (H, W) difference map, got {diff_map.shape}")
    return diff_map


def localization_dice(
    diff_map: np.ndarray | torch.Tensor,
    gt_mask: np.ndarray,
    pixel_threshold: float,
) -> float:
    """Dice overlap of {channel-mean diff >= pixel_threshold} with the ground truth. Both empty is 1."""
    predicted = _dice_map(diff_map) >= pixel_threshold
    gt = np.asarray(gt_mask)
    if gt.shape != predicted.shape:
        raise ValueError(
            f"Ground truth mask shape {gt.shape} does not match map shape {predicted.shape}"
        )
    if gt.dtype != bool:
        if not np.isin(gt, (0, 1)).all():
            raise ValueError("Ground truth mask must be binary")
        gt = gt.astype(bool)
    total = int(predicted.sum()) + int(gt.sum())
    if total == 0:
        return 1.0
    return 2 * int((predicted & gt).sum()) / total


def choose_pixel_threshold(
    diff_maps: Sequence[np.ndarray | torch.Tensor],
    gt_masks: Sequence[np.ndarray],
    grid: Sequence[float] = PIXEL_THRESHOLD_GRID,
) -> float:
    """Grid threshold maximizing mean Dice. Ties go to the larger threshold."""
    if not diff_maps or len(diff_maps) != len(gt_masks):
        raise ValueError("Need one or more difference maps, each with a ground truth mask")
    maps = [_dice_map(d) for d in diff_maps]
    best_key = None
    best = grid[0]
    for t in grid:
        mean_dice = float(np.mean([localization_dice(d, g, t) for d, g in zip(maps, gt_masks)]))
        key = (mean_dice, t)
        if best_key is None or key > best_key:
            best_key, best = key, t
    return float(best)
