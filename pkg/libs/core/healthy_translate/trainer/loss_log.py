import csv
from pathlib import Path
from typing import Dict, List, Optional

from healthy_translate.losses import LossBreakdown
from healthy_translate.utils.formatting import format_csv_float

LOSS_LOG_COLUMNS = [
    "iteration",
    "adv_d",
    "gp",
    "adv_g",
    "id",
    "rec",
    "focus",
    "total_g",
    "lr",
]

# column -> LossBreakdown field
_BREAKDOWN_FIELDS = {
    "adv_d": "adv_d",
    "gp": "gp",
    "adv_g": "adv_g",
    "id": "identity",
    "rec": "reconstruction",
    "focus": "focus",
    "total_g": "total_g",
}


class LossLog:
    """Append-only CSV of per-iteration losses. Generator columns are empty on critic-only iterations."""

    def __init__(self, path: Path | str):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        write_header = not self.path.exists() or self.path.stat().st_size == 0
        self._file = open(self.path, "a", newline="", encoding="utf-8")
        self._writer = csv.writer(self._file, lineterminator="\n")
        if write_header:
            self._writer.writerow(LOSS_LOG_COLUMNS)
            self._file.flush()

    def append(self, iteration: int, parts: LossBreakdown, lr: float) -> None:
        values = parts.as_floats()
        row = [str(iteration)]
        row += [format_csv_float(values[name]) for name in _BREAKDOWN_FIELDS.values()]
        row.append(format_csv_float(lr))
        self._writer.writerow(row)
        self._file.flush()

    def close(self) -> None:
        if not self._file.closed:
            self._file.close()

    def __enter__(self) -> "LossLog":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_loss_log(path: Path | str) -> List[Dict[str, Optional[float]]]:
    """Rows as floats keyed by column, None for empty cells. `iteration` stays a float."""
    rows = []
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            rows.append({k: float(v) if v != "" else None for k, v in row.items()})
    return rows
