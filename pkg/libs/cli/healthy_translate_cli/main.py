"""
The `healthy-translate` command.

    healthy-translate [--verbose | --quiet] <command> [--config FILE] [--runs-dir DIR] [key=value ...]

Commands: synth-data, import-data, train, select, evaluate, score. Each resolves its config from the
optional YAML file plus `key=value` overrides, creates a run directory holding the resolved
`config.yaml` and `run.log`, then runs.

Exit codes: 0 on success, 1 on a usage error, 2 on any other failure.
"""

import argparse
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Type

from pydantic import BaseModel, ValidationError

from healthy_translate.datamodel import (
    DatasetSpec,
    EvalConfig,
    ImportDataConfig,
    ScoreConfig,
    SelectConfig,
    SynthDataConfig,
    TrainConfig,
)
from healthy_translate.datasets.splits import import_image_folders
from healthy_translate.datasets.synthetic import generate_synthetic_benchmark
from healthy_translate.evaluation.pipeline import REPORT_FILENAME, evaluate, score_single
from healthy_translate.selection.select import run_selection
from healthy_translate.trainer.loop import run_training
from healthy_translate.utils.config_file import resolve_config

from healthy_translate_cli.custom_errors import (
    EXIT_FAILURE,
    EXIT_OK,
    EXIT_USAGE,
    UsageError,
    describe_failure,
    validation_messages,
)
from healthy_translate_cli.run_dir import configure_logging, create_run_dir, run_log

logger = logging.getLogger("healthy_translate_cli")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # type: ignore[override]
        raise UsageError(f"{self.prog}: {message}")


@dataclass
class Invocation:
    command: str
    config: BaseModel
    run_dir: Path
    quiet: bool


def _synth_data(inv: Invocation) -> str:
    cfg = inv.config
    assert isinstance(cfg, SynthDataConfig)
    spec = DatasetSpec.model_validate(cfg.model_dump(exclude={"output_dir"}))
    generate_synthetic_benchmark(spec, cfg.output_dir)
    return str(cfg.output_dir)


def _import_data(inv: Invocation) -> str:
    cfg = inv.config
    assert isinstance(cfg, ImportDataConfig)
    counts = import_image_folders(cfg.sources, cfg.output_dir, cfg.image_size, cfg.channels)
    logger.info("Imported %s", ", ".join(f"{k}: {v}" for k, v in sorted(counts.items())))
    return str(cfg.output_dir)


def _train(inv: Invocation) -> str:
    cfg = inv.config
    assert isinstance(cfg, TrainConfig)
    result = run_training(cfg, inv.run_dir, show_progress=False if inv.quiet else None)
    return str(result.final_checkpoint)


def _select(inv: Invocation) -> str:
    cfg = inv.config
    assert isinstance(cfg, SelectConfig)
    return str(run_selection(cfg, inv.run_dir).best)


def _evaluate(inv: Invocation) -> str:
    cfg = inv.config
    assert isinstance(cfg, EvalConfig)
    report = evaluate(cfg, inv.run_dir)
    return f"auc={report.auc:.4f} f1={report.f1:.4f} report={inv.run_dir / REPORT_FILENAME}"


def _score(inv: Invocation) -> str:
    cfg = inv.config
    assert isinstance(cfg, ScoreConfig)
    result = score_single(cfg)
    if result.heatmap is not None:
        logger.info("Heatmap written to %s", result.heatmap)
    return repr(result.score)


@dataclass
class Command:
    config_type: Type[BaseModel]
    run: Callable[[Invocation], str]
    help: str


COMMANDS: Dict[str, Command] = {
    "synth-data": Command(SynthDataConfig, _synth_data, "Write the synthetic benchmark."),
    "import-data": Command(
        ImportDataConfig, _import_data, "Build a dataset tree from image folders."
    ),
    "train": Command(TrainConfig, _train, "Train the generator and critic."),
    "select": Command(SelectConfig, _select, "Rank checkpoints by Frechet distance."),
    "evaluate": Command(EvalConfig, _evaluate, "Detection and localization metrics."),
    "score": Command(ScoreConfig, _score, "Anomaly score of one image."),
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="healthy-translate", description=__doc__.split("\n\n")[0].strip())
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", "-v", action="store_true", help="Log debug messages.")
    verbosity.add_argument(
        "--quiet", "-q", action="store_true", help="Only log warnings, no progress bar."
    )
    subparsers = parser.add_subparsers(dest="command", metavar="command", required=True)
    for name, command in COMMANDS.items():
        sub = subparsers.add_parser(name, help=command.help, description=command.help)
        sub.add_argument("--config", "-c", type=Path, help="YAML config file.")
        sub.add_argument(
            "--runs-dir",
            type=Path,
            help="Parent of the run directory. Defaults to the runs_dir setting.",
        )
        sub.add_argument(
            "overrides",
            nargs="*",
            metavar="key=value",
            help="Config values, overriding the file. Dotted keys reach nested fields.",
        )
    return parser


def parse_and_dispatch(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        # --help
        return int(e.code or 0)

    configure_logging(verbose=args.verbose, quiet=args.quiet)
    command = COMMANDS[args.command]
    try:
        cfg = resolve_config(command.config_type, args.config, args.overrides)
    except ValidationError as e:
        print(f"Invalid {args.command} config:", file=sys.stderr)
        for message in validation_messages(e):
            print(f"  {message}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, ValueError) as e:
        print(f"{args.command}: {e}", file=sys.stderr)
        return EXIT_USAGE

    try:
        run_dir = create_run_dir(args.command, cfg, args.runs_dir)
    except OSError as e:
        print(f"Cannot create run directory: {e}", file=sys.stderr)
        return EXIT_FAILURE

    with run_log(run_dir):
        logger.info("Running %s in %s", args.command, run_dir)
        try:
            output = command.run(Invocation(args.command, cfg, run_dir, args.quiet))
        except Exception as e:
            logger.debug("%s failed", args.command, exc_info=True)
            logger.error("%s failed: %s", args.command, describe_failure(e))
            return EXIT_FAILURE
        logger.info("%s finished", args.command)
    print(output)
    return EXIT_OK


def main() -> None:
    sys.exit(parse_and_dispatch())


if __name__ == "__main__":
    main()
