from healthy_translate.selection.features import (
    FeatureStats,
    FeatureStatsAccumulator,
    RandomConvEmbedder,
    TorchScriptEmbedder,
    build_extractor,
    extract_features,
)
from healthy_translate.selection.frechet import frechet_distance
from healthy_translate.selection.select import (
    SelectionResult,
    run_selection,
    select_best_checkpoint,
    write_selection_report,
)

__all__ = [
    "FeatureStats",
    "FeatureStatsAccumulator",
    "RandomConvEmbedder",
    "SelectionResult",
    "TorchScriptEmbedder",
    "build_extractor",
    "extract_features",
    "frechet_distance",
    "run_selection",
    "select_best_checkpoint",
    "write_selection_report",
]
