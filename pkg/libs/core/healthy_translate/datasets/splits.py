import logging
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from PIL import Image

from healthy_translate.datamodel import SIZE_MULTIPLE, SampleLabel, SampleRecord, Split
from healthy_translate.datasets.images import (
    IMAGE_EXTENSIONS,
    decode_image,
    read_mask,
    write_png,
)
from healthy_translate.datasets.manifest import (
    manifest_path,
    read_manifest,
    write_manifest,
)
from healthy_translate.errors import DatasetError

logger = logging.getLogger(__name__)


def _scan_images(directory: Path) -> List[Path]:
    return sorted(
        p.resolve()
        for p in directory.iterdir()
        if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS
    )


def load_split(
    root: Path | str, split: Split | str, with_labels: bool = True
) -> List[SampleRecord]:
    """Load the records of one split, sorted by path.

    Reads `root/{split}.csv` when present, otherwise every image file directly inside
    `root/{split}/`. Training splits never carry labels or masks, whatever the manifest says. With
    `with_labels=False`, neither do val and test.

    Raises:
        DatasetError: missing directory, corrupt manifest, zero images, or a healthy record whose
            ground truth mask is not empty
    """
    root = Path(root)
    split = Split(split)
    split_dir = root / split.value
    if not split_dir.is_dir():
        raise DatasetError(f"Split directory not found: {split_dir}")

    if manifest_path(root, split.value).is_file():
        records = read_manifest(root, split.value)
    else:
        records = [SampleRecord(path=p) for p in _scan_images(split_dir)]

    if not records:
        raise DatasetError(f"No images found for split {split.value} in {root}")

    if not split.labeled or not with_labels:
        records = [SampleRecord(path=r.path) for r in records]
    else:
        for record in records:
            if (
                record.label == SampleLabel.healthy
                and record.gt_mask_path is not None
                and read_mask(record.gt_mask_path).any()
            ):
                raise DatasetError(
                    f"Healthy record {record.path} has a non-empty ground truth mask"
                )

    logger.debug("Loaded %d records for split %s", len(records), split.value)
    return sorted(records, key=lambda r: r.path)


IMPORT_SOURCES = {
    "trainA": (Split.train_a, None),
    "trainB": (Split.train_b, None),
    "val_healthy": (Split.val, SampleLabel.healthy),
    "val_anomalous": (Split.val, SampleLabel.anomalous),
    "test_healthy": (Split.test, SampleLabel.healthy),
    "test_anomalous": (Split.test, SampleLabel.anomalous),
}


def import_image_folders(
    sources: Dict[str, Path],
    root: Path,
    image_size: int,
    channels: int = 1,
) -> Dict[str, int]:
    """Build a dataset tree from user folders.

    `sources` maps trainA, trainB and optionally val_healthy, val_anomalous, test_healthy and
    test_anomalous to source directories. Images are converted to grayscale (or RGB for 3 channels),
    resized bilinearly to image_size x image_size and written as 8-bit PNG with a manifest per
    split. Returns the number of images written per split.
    """
    if image_size <= 0 or image_size % SIZE_MULTIPLE != 0:
        raise DatasetError(
            f"image_size must be a positive multiple of {SIZE_MULTIPLE}, got {image_size}"
        )
    unknown = sorted(set(sources) - set(IMPORT_SOURCES))
    if unknown:
        raise DatasetError(
            f"Unknown import sources: {', '.join(unknown)}. Expected: {', '.join(IMPORT_SOURCES)}"
        )
    for required in ("trainA", "trainB"):
        if required not in sources:
            raise DatasetError(f"Import requires a {required} source directory")

    root = Path(root)
    records: Dict[Split, List[SampleRecord]] = {}
    for key, source in sources.items():
        split, label = IMPORT_SOURCES[key]
        source = Path(source)
        if not source.is_dir():
            raise DatasetError(f"Source directory not found for {key}: {source}")
        files = _scan_images(source)
        if not files:
            raise DatasetError(f"No images found for {key} in {source}")
        split_records = records.setdefault(split, [])
        for file in files:
            pixels = _resized(file, image_size, channels)
            # numbered per split so names never reveal the source folder
            out = root / split.value / f"{split.value}_{len(split_records):05d}.png"
            write_png(out, pixels if channels == 3 else pixels[:1])
            split_records.append(SampleRecord(path=out, label=label))
        logger.info("Imported %d images from %s into %s", len(files), source, split.value)

    for split, split_records in records.items():
        write_manifest(root, split.value, split_records)
    return {split.value: len(r) for split, r in records.items()}


def _resized(path: Path, image_size: int, channels: int) -> np.ndarray:
    pixels = decode_image(path, channels)
    if pixels.shape[1:] == (image_size, image_size):
        return pixels
    mode = "RGB" if channels == 3 else "L"
    source = pixels.transpose(1, 2, 0) if channels == 3 else pixels[0]
    image = Image.fromarray(np.ascontiguousarray(source), mode).resize(
        (image_size, image_size), Image.Resampling.BILINEAR
    )
    array = np.asarray(image, dtype=np.uint8)
    if channels == 3:
        return np.ascontiguousarray(array.transpose(2, 0, 1))
    return np.repeat(array[None], channels, axis=0)


def strip_labels(root: Path, splits: Optional[List[str]] = None) -> None:
    """Rewrite manifests with the path column only."""
    for split in splits or [s.value for s in Split]:
        if not manifest_path(root, split).is_file():
            continue
        records = read_manifest(root, split)
        write_manifest(root, split, records, columns=["path"])
