"""
Label-blind checkpoint selection.

Each checkpoint's generator translates the validation images through the healthy composition. The
Frechet distance between those outputs and the set B images ranks the checkpoints; the lowest wins,
ties going to the later iteration. No label or mask column is ever read.

The healthy reference is trainB, not the healthy part of the validation split: picking the healthy
validation images would need their labels.
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, List, Optional, Sequence

import torch
import torch.nn as nn

from healthy_translate.composition import compose_healthy
from healthy_translate.datamodel import SampleRecord, SelectConfig, SelectionRow, Split
from healthy_translate.datasets.images import ImageCache
from healthy_translate.datasets.sampling import record_loader
from healthy_translate.datasets.splits import load_split
from healthy_translate.errors import (
    CheckpointError,
    DatasetError,
    FrechetDistanceError,
    SelectionError,
)
from healthy_translate.networks.models import Generator, generator_forward
from healthy_translate.selection.features import (
    FeatureStats,
    build_extractor,
    extract_features,
)
from healthy_translate.selection.frechet import frechet_distance
from healthy_translate.trainer.state import load_generator
from healthy_translate.utils.device import resolve_device
from healthy_translate.utils.formatting import format_csv_float

logger = logging.getLogger(__name__)

SELECTION_COLUMNS = ["checkpoint", "iteration", "fid", "selected", "error"]
SELECTION_FILENAME = "selection.csv"


@dataclass
class SelectionResult:
    best: Path
    rows: List[SelectionRow]


@torch.no_grad()
def _translated(
    generator: Generator, batches: Iterable[torch.Tensor], device: torch.device
) -> Iterator[torch.Tensor]:
    for batch in batches:
        batch = batch.to(device)
        out = generator_forward(generator, batch)
        yield compose_healthy(batch, out.intermediate, out.mask)


def translated_stats(
    generator: Generator,
    records: Sequence[SampleRecord],
    extractor: nn.Module,
    image_size: int,
    batch_size: int,
    device: torch.device,
    cache: Optional[ImageCache] = None,
) -> FeatureStats:
    batches = record_loader(records, generator.channels, image_size, batch_size, cache)
    return extract_features(_translated(generator, batches, device), extractor, device)


def select_best_checkpoint(
    checkpoints: Sequence[Path],
    healthy_reference: Sequence[SampleRecord],
    translate_inputs: Sequence[SampleRecord],
    extractor: nn.Module,
    batch_size: int = 32,
    device: Optional[torch.device] = None,
) -> SelectionResult:
    """Rank checkpoints by Frechet distance, skipping (with a warning) any that fail.

    Raises:
        SelectionError: no checkpoints, or every checkpoint failed
    """
    if not checkpoints:
        raise SelectionError("No checkpoints to select from")
    device = device or torch.device("cpu")
    extractor = extractor.to(device)
    cache = ImageCache()
    reference: Optional[FeatureStats] = None
    reference_key: Optional[tuple] = None

    rows: List[SelectionRow] = []
    for path in checkpoints:
        path = Path(path)
        try:
            generator, header = load_generator(path, device)
            key = (header.channels, header.image_size)
            if reference is None or reference_key != key:
                reference = extract_features(
                    record_loader(
                        healthy_reference, header.channels, header.image_size, batch_size, cache
                    ),
                    extractor,
                    device,
                )
                reference_key = key
            stats = translated_stats(
                generator, translate_inputs, extractor, header.image_size, batch_size, device, cache
            )
            fid = frechet_distance(stats, reference)
        except (CheckpointError, DatasetError, FrechetDistanceError, ValueError) as e:
            logger.warning("Skipping checkpoint %s: %s", path, e)
            rows.append(SelectionRow(checkpoint=path, iteration=-1, error=str(e)))
            continue
        logger.info("Checkpoint %s (iteration %d): FID %.6g", path, header.iteration, fid)
        rows.append(SelectionRow(checkpoint=path, iteration=header.iteration, fid=fid))

    scored = [row for row in rows if row.fid is not None]
    if not scored:
        failures = "; ".join(f"{r.checkpoint}: {r.error}" for r in rows)
        raise SelectionError(f"All {len(rows)} checkpoints failed: {failures}")
    best = min(scored, key=lambda row: (row.fid, -row.iteration))
    best.selected = True
    return SelectionResult(best=best.checkpoint, rows=rows)


def write_selection_report(rows: Sequence[SelectionRow], path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(SELECTION_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    row.checkpoint.as_posix(),
                    row.iteration,
                    format_csv_float(row.fid),
                    "true" if row.selected else "false",
                    row.error or "",
                ]
            )
    return path


def discover_checkpoints(directory: Path | str) -> List[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise SelectionError(f"Checkpoint directory not found: {directory}")
    return sorted(p for p in directory.glob("*.pt") if p.is_file())


def run_selection(cfg: SelectConfig, run_dir: Path | str) -> SelectionResult:
    """Select among every `*.pt` in `cfg.checkpoints_dir`; writes `selection.csv` into `run_dir`.

    The healthy reference is trainB. The translated inputs are all validation images, read without
    labels.
    """
    device = resolve_device(cfg.device)
    checkpoints = discover_checkpoints(cfg.checkpoints_dir)
    healthy = load_split(cfg.data_root, Split.train_b)
    inputs = load_split(cfg.data_root, Split.val, with_labels=False)

    channels = None
    for path in checkpoints:
        try:
            channels = load_generator(path)[1].channels
            break
        except CheckpointError:
            continue
    if channels is None:
        raise SelectionError(f"No readable checkpoint in {cfg.checkpoints_dir}")
    extractor = build_extractor(cfg, channels)

    result = select_best_checkpoint(
        checkpoints, healthy, inputs, extractor, batch_size=cfg.batch_size, device=device
    )
    write_selection_report(result.rows, Path(run_dir) / SELECTION_FILENAME)
    logger.info("Selected %s", result.best)
    return result
