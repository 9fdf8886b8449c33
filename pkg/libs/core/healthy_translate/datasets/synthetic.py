"""
Synthetic benchmark with ground truth lesion masks.

Every image is a smooth low frequency background with a fixed bright ellipse "organ". Anomalous
images add one square lesion inside the organ. The lesion only changes pixels under its mask, so an
anomalous image equals its healthy background everywhere else.

Each sample is drawn from its own generator seeded by (seed, split, index), so generation is a pure
function of the DatasetSpec and any single sample can be regenerated for inspection.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from healthy_translate.datamodel import (
    BenchmarkManifest,
    DatasetSpec,
    SampleLabel,
    SampleRecord,
    Split,
    SplitCounts,
)
from healthy_translate.datasets.images import write_png
from healthy_translate.datasets.manifest import write_manifest
from healthy_translate.errors import DatasetError

logger = logging.getLogger(__name__)

BENCHMARK_FILENAME = "benchmark.json"

_SPLIT_STREAMS = {Split.train_a: 1, Split.train_b: 2, Split.val: 3, Split.test: 4}
_ORDER_STREAM = 5
_FILE_PREFIX = {Split.train_a: "a", Split.train_b: "b", Split.val: "val", Split.test: "test"}

# Organ ellipse, in fractions of the image size
_ORGAN_CENTER = (0.5, 0.5)
_ORGAN_SEMI_AXES = (0.38, 0.30)  # rows, cols
_ORGAN_LIFT = 0.2


@dataclass(frozen=True)
class SyntheticSample:
    image: np.ndarray  # (C, H, W) uint8
    background: np.ndarray  # (C, H, W) uint8, the image before lesion injection
    mask: Optional[np.ndarray]  # (H, W) bool, None for healthy samples


def _organ_mask(size: int) -> np.ndarray:
    rows, cols = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
    cy, cx = _ORGAN_CENTER[0] * size, _ORGAN_CENTER[1] * size
    ay, ax = _ORGAN_SEMI_AXES[0] * size, _ORGAN_SEMI_AXES[1] * size
    return ((rows - cy) / ay) ** 2 + ((cols - cx) / ax) ** 2 <= 1.0


def _render_background(rng: np.random.Generator, size: int) -> np.ndarray:
    y, x = np.mgrid[0:size, 0:size].astype(np.float64) / size
    field = np.full((size, size), 0.35)
    for _ in range(4):
        fy, fx = rng.integers(1, 4, size=2)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        amplitude = rng.uniform(0.02, 0.06)
        field += amplitude * np.cos(2.0 * np.pi * (fy * y + fx * x) + phase)
    field += _ORGAN_LIFT * _organ_mask(size)
    field += rng.normal(0.0, 0.01, size=(size, size))
    return np.rint(np.clip(field, 0.0, 1.0) * 255.0).astype(np.uint8)


def _lesion_mask(
    rng: np.random.Generator, size: int, size_range: tuple[int, int]
) -> np.ndarray:
    side = int(rng.integers(size_range[0], size_range[1] + 1))
    organ = _organ_mask(size)
    top, left = (size - side) // 2, (size - side) // 2
    for _ in range(1000):
        row, col = rng.integers(0, size - side + 1, size=2)
        if organ[row + side // 2, col + side // 2]:
            top, left = int(row), int(col)
            break
    mask = np.zeros((size, size), dtype=bool)
    mask[top : top + side, left : left + side] = True
    return mask


def sample_rng(seed: int, split: Split, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, _SPLIT_STREAMS[split], index])


def order_rng(seed: int, split: Split) -> np.random.Generator:
    """Shuffles the file order of a split. Never equal to any sample stream."""
    return np.random.default_rng([seed, _ORDER_STREAM, _SPLIT_STREAMS[split]])


def synthesize_sample(
    spec: DatasetSpec, split: Split, index: int, lesioned: bool
) -> SyntheticSample:
    rng = sample_rng(spec.seed, split, index)
    gray = _render_background(rng, spec.image_size)
    mask = None
    lesioned_gray = gray
    if lesioned:
        mask = _lesion_mask(rng, spec.image_size, spec.lesion_size_range)
        delta = int(round(spec.lesion_contrast * 255))
        lesioned_gray = gray.copy()
        lesioned_gray[mask] = np.minimum(gray[mask].astype(np.int32) + delta, 255).astype(
            np.uint8
        )
    return SyntheticSample(
        image=np.repeat(lesioned_gray[None], spec.channels, axis=0),
        background=np.repeat(gray[None], spec.channels, axis=0),
        mask=mask,
    )


def _split_plan(spec: DatasetSpec) -> Dict[Split, List[bool]]:
    return {
        Split.train_a: [False] * spec.n_mixed_healthy_A + [True] * spec.n_mixed_anomalous_A,
        Split.train_b: [False] * spec.n_healthy_B,
        Split.val: [False] * spec.n_val + [True] * spec.n_val,
        Split.test: [False] * spec.n_test + [True] * spec.n_test,
    }


def _stored_pixels(image: np.ndarray, channels: int) -> np.ndarray:
    # PNG holds L or RGB; other channel counts are stored as grayscale and replicated on load
    return image if channels == 3 else image[:1]


def generate_synthetic_benchmark(spec: DatasetSpec, output_dir: Path) -> BenchmarkManifest:
    """Write the benchmark tree: {trainA,trainB,val,test}/*.png, {split}.csv and benchmark.json.

    File names carry no label information and trainA has neither labels nor masks on disk. Anomalous
    val/test samples get a {0,255} mask PNG under {split}/masks/.

    Raises:
        DatasetError: output directory is not empty or not writable
    """
    output_dir = Path(output_dir)
    if output_dir.exists() and any(output_dir.iterdir()):
        raise DatasetError(
            f"Cannot generate benchmark because {output_dir} already exists and is not empty"
        )
    try:
        output_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DatasetError(
            f"Cannot generate benchmark because {output_dir} is not writable: {e}"
        ) from e

    counts: Dict[str, SplitCounts] = {}
    for split, plan in _split_plan(spec).items():
        order = order_rng(spec.seed, split).permutation(len(plan))
        split_dir = output_dir / split.value
        records: List[SampleRecord] = []
        for position, source_index in enumerate(order):
            lesioned = plan[source_index]
            sample = synthesize_sample(spec, split, int(source_index), lesioned)
            name = f"{_FILE_PREFIX[split]}_{position:05d}.png"
            image_path = split_dir / name
            write_png(image_path, _stored_pixels(sample.image, spec.channels))
            mask_path = None
            label = None
            if split.labeled:
                label = SampleLabel.anomalous if lesioned else SampleLabel.healthy
                if sample.mask is not None:
                    mask_path = split_dir / "masks" / name
                    write_png(mask_path, sample.mask.astype(np.uint8) * 255)
            records.append(
                SampleRecord(path=image_path, label=label, gt_mask_path=mask_path)
            )
        write_manifest(output_dir, split.value, records)
        n_anomalous = sum(plan)
        counts[split.value] = SplitCounts(
            healthy=len(plan) - n_anomalous, anomalous=n_anomalous
        )
        logger.info(
            "Wrote %s: %d healthy, %d anomalous",
            split.value,
            len(plan) - n_anomalous,
            n_anomalous,
        )

    dataset_spec = DatasetSpec.model_validate(
        spec.model_dump(include=set(DatasetSpec.model_fields))
    )
    manifest = BenchmarkManifest(spec=dataset_spec, counts=counts)
    manifest.save_to_file(output_dir / BENCHMARK_FILENAME)
    return manifest
