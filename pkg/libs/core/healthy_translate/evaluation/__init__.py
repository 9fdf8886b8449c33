from healthy_translate.evaluation.metrics import (
    PIXEL_THRESHOLD_GRID,
    ClassificationMetrics,
    ThresholdChoice,
    anomaly_score,
    choose_pixel_threshold,
    classification_metrics,
    localization_dice,
    roc_auc,
    select_threshold,
)
from healthy_translate.evaluation.pipeline import (
    ScoredSample,
    SingleScore,
    evaluate,
    score_records,
    score_single,
)

__all__ = [
    "PIXEL_THRESHOLD_GRID",
    "ClassificationMetrics",
    "ScoredSample",
    "SingleScore",
    "ThresholdChoice",
    "anomaly_score",
    "choose_pixel_threshold",
    "classification_metrics",
    "evaluate",
    "localization_dice",
    "roc_auc",
    "score_records",
    "score_single",
    "select_threshold",
]
