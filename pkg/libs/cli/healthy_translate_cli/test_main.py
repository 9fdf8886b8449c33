from pathlib import Path
from typing import List

import pytest
import yaml

from healthy_translate.datamodel import DatasetSpec, EvalReport, Split
from healthy_translate.datasets.images import write_png
from healthy_translate.datasets.synthetic import synthesize_sample
from healthy_translate.trainer.loss_log import read_loss_log

from healthy_translate_cli.custom_errors import EXIT_FAILURE, EXIT_OK, EXIT_USAGE
from healthy_translate_cli.main import COMMANDS, build_parser, parse_and_dispatch
from healthy_translate_cli.run_dir import LOG_FILENAME, SNAPSHOT_FILENAME

TINY_DATA = [
    "image_size=64",
    "n_healthy_B=6",
    "n_mixed_healthy_A=4",
    "n_mixed_anomalous_A=2",
    "n_val=3",
    "n_test=3",
]

TINY_TRAIN = [
    "image_size=64",
    "width_scale=0.125",
    "batch_size=2",
    "total_iterations=4",
    "decay_iterations=2",
    "checkpoint_every=2",
    "device=cpu",
]


def _cli(runs: Path, command: str, *args: str) -> int:
    return parse_and_dispatch(["--quiet", command, "--runs-dir", str(runs), *args])


def _run_dirs(runs: Path, command: str) -> List[Path]:
    return sorted(runs.glob(f"*-{command}-*"))


def _last_line(capsys) -> str:
    return capsys.readouterr().out.strip().splitlines()[-1]


@pytest.fixture
def runs(tmp_path):
    return tmp_path / "runs"


@pytest.fixture
def trained(tiny_benchmark, runs, capsys):
    assert _cli(runs, "train", f"data_root={tiny_benchmark}", *TINY_TRAIN) == EXIT_OK
    return Path(_last_line(capsys))


def test_every_command_has_a_parser():
    parser = build_parser()
    for name in COMMANDS:
        args = parser.parse_args([name, "a=1"])
        assert args.command == name
        assert args.overrides == ["a=1"]


def test_help(capsys):
    assert parse_and_dispatch(["--help"]) == EXIT_OK
    assert "synth-data" in capsys.readouterr().out


def test_unknown_command(capsys):
    assert parse_and_dispatch(["frobnicate"]) == EXIT_USAGE
    assert "frobnicate" in capsys.readouterr().err


def test_unknown_key(tmp_path, runs, capsys):
    assert _cli(runs, "train", f"data_root={tmp_path}", "learning_rat=0.1") == EXIT_USAGE
    assert "learning_rat: unknown config key" in capsys.readouterr().err
    assert not runs.exists()


def test_misspelled_key_is_reported_as_written(tmp_path, runs, capsys):
    assert _cli(runs, "train", f"data_root={tmp_path}", "sed=3") == EXIT_USAGE
    assert "sed: unknown config key" in capsys.readouterr().err


def test_evaluate_without_checkpoint(tmp_path, runs, capsys):
    assert _cli(runs, "evaluate", f"data_root={tmp_path}") == EXIT_USAGE
    assert "checkpoint: missing required config key" in capsys.readouterr().err


def test_malformed_override(tmp_path, runs, capsys):
    assert _cli(runs, "train", f"data_root={tmp_path}", "seed") == EXIT_USAGE
    assert "Invalid override 'seed'" in capsys.readouterr().err


def test_missing_config_file(tmp_path, runs, capsys):
    assert _cli(runs, "train", "--config", str(tmp_path / "nope.yaml")) == EXIT_USAGE
    assert "nope.yaml" in capsys.readouterr().err


def test_runtime_failure_is_exit_2(tmp_path, runs):
    code = _cli(runs, "train", f"data_root={tmp_path / 'missing'}", *TINY_TRAIN)
    assert code == EXIT_FAILURE
    (run_dir,) = _run_dirs(runs, "train")
    assert "train failed" in (run_dir / LOG_FILENAME).read_text()


def test_synth_data(tmp_path, runs, capsys):
    out = tmp_path / "bench"
    assert _cli(runs, "synth-data", f"output_dir={out}", *TINY_DATA) == EXIT_OK
    assert _last_line(capsys) == str(out)
    assert len(list((out / "trainB").glob("*.png"))) == 6
    (run_dir,) = _run_dirs(runs, "synth-data")
    assert yaml.safe_load((run_dir / SNAPSHOT_FILENAME).read_text())["n_val"] == 3

    # output directory now exists and is not empty
    assert _cli(runs, "synth-data", f"output_dir={out}", *TINY_DATA) == EXIT_FAILURE


def test_import_data(tmp_path, runs):
    image = synthesize_sample(DatasetSpec(), Split.train_b, 0, False).image
    for name in ("a", "b"):
        write_png(tmp_path / "src" / name / "img.png", image)
    out = tmp_path / "imported"
    code = _cli(
        runs,
        "import-data",
        f"output_dir={out}",
        f"sources.trainA={tmp_path / 'src' / 'a'}",
        f"sources.trainB={tmp_path / 'src' / 'b'}",
    )
    assert code == EXIT_OK
    assert (out / "trainA.csv").exists()
    assert (out / "trainB.csv").exists()


def test_train_config_file_and_override(tiny_benchmark, tmp_path, runs, capsys):
    values = {k: yaml.safe_load(v) for k, v in (t.split("=") for t in TINY_TRAIN)}
    config = tmp_path / "train.yaml"
    config.write_text(
        yaml.safe_dump(
            {
                "data_root": str(tiny_benchmark),
                "seed": 1,
                "weights": {"lambda_rec": 5.0},
                **values,
            }
        )
    )
    assert _cli(runs, "train", "--config", str(config), "seed=5") == EXIT_OK
    final = Path(_last_line(capsys))
    assert final.name == "iter_00000004.pt"
    (run_dir,) = _run_dirs(runs, "train")
    assert final.parent == run_dir / "checkpoints"
    snapshot = yaml.safe_load((run_dir / SNAPSHOT_FILENAME).read_text())
    assert snapshot["seed"] == 5
    assert snapshot["weights.lambda_rec"] == 5.0
    assert "Running train" in (run_dir / LOG_FILENAME).read_text()


def test_rerun_from_snapshot(trained, runs, capsys):
    (first,) = _run_dirs(runs, "train")
    assert _cli(runs, "train", "--config", str(first / SNAPSHOT_FILENAME)) == EXIT_OK
    second = Path(_last_line(capsys)).parent.parent
    assert second != first
    assert read_loss_log(second / "losses.csv") == read_loss_log(first / "losses.csv")


def test_score(trained, tiny_benchmark, tmp_path, runs, capsys):
    image = sorted((tiny_benchmark / "test").glob("*.png"))[0]
    heatmap = tmp_path / "heatmap.png"
    args = [f"checkpoint={trained}", f"image={image}", f"heatmap={heatmap}"]
    assert _cli(runs, "score", *args) == EXIT_OK
    first = _last_line(capsys)
    assert _cli(runs, "score", *args) == EXIT_OK
    assert _last_line(capsys) == first
    assert float(first) >= 0
    assert heatmap.exists()


def test_score_missing_image(trained, tmp_path, runs, capsys):
    code = _cli(runs, "score", f"checkpoint={trained}", f"image={tmp_path / 'nope.png'}")
    assert code == EXIT_USAGE
    assert "image:" in capsys.readouterr().err


def test_pipeline_end_to_end(tmp_path, runs, capsys):
    data = tmp_path / "bench"
    assert _cli(runs, "synth-data", f"output_dir={data}", *TINY_DATA) == EXIT_OK
    assert _cli(runs, "train", f"data_root={data}", *TINY_TRAIN) == EXIT_OK
    checkpoints = Path(_last_line(capsys)).parent

    code = _cli(runs, "select", f"data_root={data}", f"checkpoints_dir={checkpoints}")
    assert code == EXIT_OK
    best = Path(_last_line(capsys))
    assert best.parent == checkpoints
    (select_dir,) = _run_dirs(runs, "select")
    assert (select_dir / "selection.csv").exists()

    code = _cli(runs, "evaluate", f"data_root={data}", f"checkpoint={best}", "save_maps=true")
    assert code == EXIT_OK
    assert "auc=" in _last_line(capsys)
    (eval_dir,) = _run_dirs(runs, "evaluate")
    report = EvalReport.load_from_file(eval_dir / "report.json")
    assert report.n_pos == 3 and report.n_neg == 3
    assert (eval_dir / "scores.csv").exists()
    assert (eval_dir / "maps").is_dir()


@pytest.mark.slow
def test_desk_scale_detection(tmp_path, runs, capsys):
    data = tmp_path / "bench"
    assert _cli(runs, "synth-data", f"output_dir={data}") == EXIT_OK
    assert _cli(runs, "train", "preset=desk_64", f"data_root={data}") == EXIT_OK
    checkpoints = Path(_last_line(capsys)).parent
    code = _cli(runs, "select", f"data_root={data}", f"checkpoints_dir={checkpoints}")
    assert code == EXIT_OK
    best = Path(_last_line(capsys))
    assert _cli(runs, "evaluate", f"data_root={data}", f"checkpoint={best}") == EXIT_OK

    (eval_dir,) = _run_dirs(runs, "evaluate")
    report = EvalReport.load_from_file(eval_dir / "report.json")
    assert report.auc >= 0.90
    assert report.mean_dice is not None and report.mean_dice >= 0.30

    # same background with and without a lesion
    sample = synthesize_sample(DatasetSpec(), Split.test, 0, lesioned=True)
    healthy, lesioned = tmp_path / "healthy.png", tmp_path / "lesioned.png"
    write_png(healthy, sample.background)
    write_png(lesioned, sample.image)
    scores = []
    for image in (healthy, lesioned):
        assert _cli(runs, "score", f"checkpoint={best}", f"image={image}") == EXIT_OK
        scores.append(float(_last_line(capsys)))
    assert scores[1] > scores[0]
