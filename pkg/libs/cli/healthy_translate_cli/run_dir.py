"""
Run directories.

Every command writes into `<runs_dir>/<YYYYmmdd-HHMMSS>-<command>-<hash>`, where the hash names the
resolved config. The directory holds `config.yaml` (the resolved config snapshot) and `run.log`.
"""

import contextlib
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterator, Optional

from pydantic import BaseModel

from healthy_translate.utils.config import Config
from healthy_translate.utils.config_file import config_hash, write_snapshot

SNAPSHOT_FILENAME = "config.yaml"
LOG_FILENAME = "run.log"
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def run_dir_name(command: str, cfg: BaseModel, now: Optional[datetime] = None) -> str:
    now = now or datetime.now(timezone.utc)
    return f"{now.strftime('%Y%m%d-%H%M%S')}-{command}-{config_hash(cfg)}"


def create_run_dir(
    command: str,
    cfg: BaseModel,
    runs_dir: Path | str | None = None,
    now: Optional[datetime] = None,
) -> Path:
    """Create the run directory and write the config snapshot into it."""
    runs_dir = Path(runs_dir if runs_dir is not None else Config.shared().runs_dir)
    base = runs_dir / run_dir_name(command, cfg, now)
    run_dir = base
    suffix = 1
    while True:
        try:
            run_dir.mkdir(parents=True, exist_ok=False)
            break
        except FileExistsError:
            # same config started twice within one second
            run_dir = base.with_name(f"{base.name}-{suffix}")
            suffix += 1
    write_snapshot(cfg, run_dir / SNAPSHOT_FILENAME)
    return run_dir


class _StderrHandler(logging.StreamHandler):
    """Writes to whatever sys.stderr is at emit time."""

    @property  # type: ignore[override]
    def stream(self):
        return sys.stderr

    @stream.setter
    def stream(self, value):
        pass


def configure_logging(verbose: bool = False, quiet: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    root = logging.getLogger()
    root.setLevel(level)
    console = [h for h in root.handlers if isinstance(h, _StderrHandler)]
    if not console:
        handler = _StderrHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root.addHandler(handler)
        console = [handler]
    for handler in console:
        handler.setLevel(level)


@contextlib.contextmanager
def run_log(run_dir: Path) -> Iterator[Path]:
    """Copy log records (INFO and above, or DEBUG with --verbose) into `run_dir/run.log`."""
    path = run_dir / LOG_FILENAME
    handler = logging.FileHandler(path, mode="a", encoding="utf-8")
    handler.setLevel(logging.DEBUG)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root = logging.getLogger()
    previous_level = root.level
    root.addHandler(handler)
    if root.level > logging.INFO or root.level == logging.NOTSET:
        root.setLevel(logging.INFO)
    try:
        yield path
    finally:
        root.removeHandler(handler)
        root.setLevel(previous_level)
        handler.close()
