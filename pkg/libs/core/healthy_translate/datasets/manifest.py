import csv
from pathlib import Path
from typing import Iterable, List

from healthy_translate.datamodel import SampleLabel, SampleRecord
from healthy_translate.errors import DatasetError

MANIFEST_COLUMNS = ["path", "label", "gt_mask_path"]


def manifest_path(root: Path, split: str) -> Path:
    return Path(root) / f"{split}.csv"


def _relative(path: Path, root: Path) -> str:
    try:
        return path.resolve().relative_to(root.resolve()).as_posix()
    except ValueError:
        return path.resolve().as_posix()


def write_manifest(
    root: Path,
    split: str,
    records: Iterable[SampleRecord],
    columns: List[str] = MANIFEST_COLUMNS,
) -> Path:
    """Write `root/{split}.csv`. Paths are stored relative to root, rows sorted by path."""
    root = Path(root)
    rows = [
        {
            "path": _relative(r.path, root),
            "label": r.label.value if r.label is not None else "",
            "gt_mask_path": _relative(r.gt_mask_path, root) if r.gt_mask_path else "",
        }
        for r in records
    ]
    rows.sort(key=lambda row: row["path"])
    path = manifest_path(root, split)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(
            f, fieldnames=columns, lineterminator="\n", extrasaction="ignore"
        )
        writer.writeheader()
        writer.writerows(rows)
    return path


def read_manifest(root: Path, split: str) -> List[SampleRecord]:
    """Read `root/{split}.csv`.

    Only the `path` column is required; manifests with the label column stripped are valid.

    Raises:
        DatasetError: missing file, missing path column, empty path or unknown label
    """
    root = Path(root)
    path = manifest_path(root, split)
    try:
        with open(path, "r", newline="") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames is None or "path" not in reader.fieldnames:
                raise DatasetError(
                    f"Corrupt manifest {path}: expected a header with a 'path' column"
                )
            raw_rows = list(reader)
    except FileNotFoundError as e:
        raise DatasetError(f"Manifest not found: {path}") from e
    except (csv.Error, UnicodeDecodeError) as e:
        raise DatasetError(f"Corrupt manifest {path}: {e}") from e

    records: List[SampleRecord] = []
    # header is line 1
    for line, row in enumerate(raw_rows, start=2):
        if None in row:
            raise DatasetError(f"Corrupt manifest {path}, line {line}: too many columns")
        file_path = (row.get("path") or "").strip()
        if not file_path:
            raise DatasetError(f"Corrupt manifest {path}, line {line}: empty path")
        label_value = (row.get("label") or "").strip()
        try:
            label = SampleLabel(label_value) if label_value else None
        except ValueError as e:
            raise DatasetError(
                f"Corrupt manifest {path}, line {line}: unknown label '{label_value}'"
            ) from e
        mask_value = (row.get("gt_mask_path") or "").strip()
        records.append(
            SampleRecord(
                path=(root / file_path).resolve(),
                label=label,
                gt_mask_path=(root / mask_value).resolve() if mask_value else None,
            )
        )
    return sorted(records, key=lambda r: r.path)
