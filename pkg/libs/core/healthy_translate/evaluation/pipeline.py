"""
Evaluation and single image scoring.

`evaluate` picks the score threshold on the labeled validation split and applies it to the test
split. It writes into the run directory:

- `report.json`: the EvalReport
- `scores.csv`: one row per test sample
- `roc.csv`: the test ROC curve
- `maps/`: test difference map heatmaps, when `save_maps` is set
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import torch
from sklearn.metrics import roc_curve

from healthy_translate.composition import compose_healthy, difference_map, save_heatmap
from healthy_translate.datamodel import (
    EvalConfig,
    EvalReport,
    SampleLabel,
    SampleRecord,
    SampleScore,
    ScoreConfig,
    ScoreReduction,
    Split,
)
from healthy_translate.datasets.images import ImageCache, load_image, normalize, read_mask
from healthy_translate.datasets.sampling import record_loader
from healthy_translate.datasets.splits import load_split
from healthy_translate.errors import DatasetError
from healthy_translate.evaluation.metrics import (
    choose_pixel_threshold,
    classification_metrics,
    localization_dice,
    reduce_difference,
    roc_auc,
    select_threshold,
)
from healthy_translate.networks.models import Generator, generator_forward
from healthy_translate.trainer.state import load_generator
from healthy_translate.utils.device import resolve_device
from healthy_translate.utils.formatting import format_csv_float

logger = logging.getLogger(__name__)

REPORT_FILENAME = "report.json"
SCORES_FILENAME = "scores.csv"
ROC_FILENAME = "roc.csv"
MAPS_DIRNAME = "maps"


@dataclass
class ScoredSample:
    record: SampleRecord
    score: float
    diff_map: np.ndarray  # (C, H, W), nonnegative


@torch.no_grad()
def translate(generator: Generator, batch: torch.Tensor) -> torch.Tensor:
    """Healthy composition B' for a batch of inputs."""
    out = generator_forward(generator, batch)
    return compose_healthy(batch, out.intermediate, out.mask)


@torch.no_grad()
def score_records(
    generator: Generator,
    records: Sequence[SampleRecord],
    image_size: int,
    batch_size: int = 32,
    device: Optional[torch.device] = None,
    reduction: ScoreReduction = ScoreReduction.mean,
    cache: Optional[ImageCache] = None,
) -> List[ScoredSample]:
    device = device or torch.device("cpu")
    scored: List[ScoredSample] = []
    loader = record_loader(records, generator.channels, image_size, batch_size, cache)
    for batch in loader:
        batch = batch.to(device)
        diffs = difference_map(batch, translate(generator, batch)).cpu()
        chunk = records[len(scored) : len(scored) + len(diffs)]
        for record, diff in zip(chunk, diffs):
            scored.append(
                ScoredSample(
                    record=record,
                    score=reduce_difference(diff, reduction),
                    diff_map=diff.numpy(),
                )
            )
    return scored


def _labels(samples: Sequence[ScoredSample], split: str) -> List[int]:
    labels = []
    for sample in samples:
        if sample.record.label is None:
            raise DatasetError(
                f"Evaluation needs labels, but {sample.record.path} in {split} has none"
            )
        labels.append(int(sample.record.label == SampleLabel.anomalous))
    return labels


def _with_masks(samples: Sequence[ScoredSample]) -> List[ScoredSample]:
    return [
        s
        for s in samples
        if s.record.label == SampleLabel.anomalous and s.record.gt_mask_path is not None
    ]


def write_scores(rows: Sequence[SampleScore], threshold: float, path: Path) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["path", "label", "score", "predicted", "dice"])
        for row in rows:
            predicted = SampleLabel.anomalous if row.score >= threshold else SampleLabel.healthy
            writer.writerow(
                [
                    row.path.as_posix(),
                    row.label.value,
                    format_csv_float(row.score),
                    predicted.value,
                    format_csv_float(row.dice),
                ]
            )
    return path


def write_roc(scores: Sequence[float], labels: Sequence[int], path: Path) -> Path:
    fpr, tpr, thresholds = roc_curve(labels, scores)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["fpr", "tpr", "threshold"])
        for row in zip(fpr, tpr, thresholds):
            writer.writerow([format_csv_float(float(v)) for v in row])
    return path


def evaluate(cfg: EvalConfig, run_dir: Path | str) -> EvalReport:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    device = resolve_device(cfg.device)
    generator, header = load_generator(cfg.checkpoint, device)
    cache = ImageCache()

    val = score_records(
        generator,
        load_split(cfg.data_root, Split.val),
        header.image_size,
        cfg.batch_size,
        device,
        cfg.score_reduction,
        cache,
    )
    test = score_records(
        generator,
        load_split(cfg.data_root, Split.test),
        header.image_size,
        cfg.batch_size,
        device,
        cfg.score_reduction,
        cache,
    )
    val_scores = [s.score for s in val]
    val_labels = _labels(val, "val")
    test_scores = [s.score for s in test]
    test_labels = _labels(test, "test")

    choice = select_threshold(val_scores, val_labels, cfg.threshold_rule)
    if choice.degenerate:
        logger.warning(
            "All validation scores are equal (%g), the threshold is degenerate", choice.threshold
        )
    metrics = classification_metrics(test_scores, test_labels, choice.threshold)
    if metrics.undefined:
        logger.warning("Undefined metrics reported as 0: %s", ", ".join(metrics.undefined))

    pixel_threshold = cfg.pixel_threshold
    val_masked = _with_masks(val)
    if pixel_threshold is None and val_masked:
        pixel_threshold = choose_pixel_threshold(
            [s.diff_map for s in val_masked],
            [read_mask(s.record.gt_mask_path) for s in val_masked],  # type: ignore[arg-type]
        )
        logger.info(
            "Pixel threshold %.2f chosen on %d validation masks", pixel_threshold, len(val_masked)
        )

    dice_by_path = {}
    if pixel_threshold is not None:
        for s in _with_masks(test):
            if s.score >= choice.threshold:
                gt = read_mask(s.record.gt_mask_path)  # type: ignore[arg-type]
                dice_by_path[s.record.path] = localization_dice(s.diff_map, gt, pixel_threshold)

    rows = [
        SampleScore(
            path=s.record.path,
            label=s.record.label,  # type: ignore[arg-type]
            score=s.score,
            dice=dice_by_path.get(s.record.path),
        )
        for s in test
    ]
    report = EvalReport(
        auc=roc_auc(test_scores, test_labels),
        precision=metrics.precision,
        recall=metrics.recall,
        specificity=metrics.specificity,
        f1=metrics.f1,
        threshold=choice.threshold,
        n_pos=sum(test_labels),
        n_neg=len(test_labels) - sum(test_labels),
        threshold_rule=cfg.threshold_rule,
        score_reduction=cfg.score_reduction,
        degenerate_threshold=choice.degenerate,
        undefined_metrics=metrics.undefined,
        val_auc=roc_auc(val_scores, val_labels),
        pixel_threshold=pixel_threshold,
        mean_dice=float(np.mean(list(dice_by_path.values()))) if dice_by_path else None,
        n_dice=len(dice_by_path),
        checkpoint=cfg.checkpoint,
        scores=rows,
    )

    report.save_to_file(run_dir / REPORT_FILENAME)
    write_scores(rows, choice.threshold, run_dir / SCORES_FILENAME)
    write_roc(test_scores, test_labels, run_dir / ROC_FILENAME)
    if cfg.save_maps:
        for s in test:
            save_heatmap(s.diff_map, run_dir / MAPS_DIRNAME / f"{s.record.path.stem}.png")
    logger.info(
        "Test AUC %.4f, F1 %.4f at threshold %.6g (%d anomalous, %d healthy)",
        report.auc,
        report.f1,
        report.threshold,
        report.n_pos,
        report.n_neg,
    )
    return report


@dataclass
class SingleScore:
    score: float
    heatmap: Optional[Path] = None


def score_single(cfg: ScoreConfig) -> SingleScore:
    """Anomaly score of one image, plus its heatmap when `cfg.heatmap` is set."""
    device = resolve_device(cfg.device)
    generator, header = load_generator(cfg.checkpoint, device)
    pixels = load_image(cfg.image, header.channels, header.image_size)
    x = torch.from_numpy(normalize(pixels[None])).to(device)
    diff = difference_map(x, translate(generator, x))[0].cpu()
    score = reduce_difference(diff, cfg.score_reduction)
    heatmap = save_heatmap(diff, cfg.heatmap) if cfg.heatmap is not None else None
    return SingleScore(score=score, heatmap=heatmap)
