import shutil
from unittest.mock import patch

import pytest
from dotenv import load_dotenv

from healthy_translate.datamodel import DatasetSpec, TrainConfig
from healthy_translate.datasets.synthetic import generate_synthetic_benchmark
from healthy_translate.utils.config import Config


@pytest.fixture(scope="session", autouse=True)
def load_env():
    load_dotenv()


# mock out the settings path so we don't clobber the user's actual settings during tests
@pytest.fixture(autouse=True)
def use_temp_settings_dir(tmp_path):
    with patch.object(
        Config, "settings_path", return_value=str(tmp_path / "settings.yaml")
    ):
        yield


@pytest.fixture(autouse=True)
def cpu_device(monkeypatch):
    # determinism tests need one device, never pick up a GPU implicitly
    monkeypatch.setenv("HEALTHY_TRANSLATE_DEVICE", "cpu")
    Config._shared_instance = None
    yield
    Config._shared_instance = None


TINY_SPEC = DatasetSpec(
    image_size=64,
    channels=1,
    n_healthy_B=6,
    n_mixed_healthy_A=4,
    n_mixed_anomalous_A=2,
    n_val=3,
    n_test=3,
    lesion_size_range=(8, 16),
    lesion_contrast=0.5,
    seed=0,
)


@pytest.fixture(scope="session")
def tiny_benchmark_root(tmp_path_factory):
    """Small synthetic benchmark shared across tests. Treat as read-only."""
    root = tmp_path_factory.mktemp("tiny_benchmark")
    generate_synthetic_benchmark(TINY_SPEC, root)
    return root


@pytest.fixture
def tiny_benchmark(tmp_path, tiny_benchmark_root):
    """Private copy of the tiny benchmark, safe to modify."""
    root = tmp_path / "data"
    shutil.copytree(tiny_benchmark_root, root)
    return root


@pytest.fixture
def tiny_train_config(tiny_benchmark):
    return TrainConfig(
        data_root=tiny_benchmark,
        image_size=64,
        channels=1,
        width_scale=0.125,
        batch_size=2,
        total_iterations=4,
        decay_iterations=2,
        checkpoint_every=2,
        log_every=1,
        seed=0,
        device="cpu",
    )


def pytest_addoption(parser):
    parser.addoption(
        "--runslow",
        action="store_true",
        default=False,
        help="run slow tests: desk scale training runs",
    )
    parser.addoption(
        "--runsinglewithoutchecks",
        action="store_true",
        default=False,
        help="if testing a single test, don't check for skips like runslow",
    )


def is_single_manual_test(config, items) -> bool:
    # Check if we're running manually (eg, in vscode)
    if not config.getoption("--runsinglewithoutchecks"):
        return False

    if len(items) == 1:
        return True
    if len(items) == 0:
        return False

    # Check if all of the items are the same prefix, excluding a.b.c[param]
    # This is still a 'single test' for the purposes of this flag
    prefix = items[0].name.split("[")[0] + "["
    for item in items:
        if not item.name.startswith(prefix):
            return False
    return True


def pytest_collection_modifyitems(config, items):
    # Always run test if it's a single test manually invoked
    if is_single_manual_test(config, items):
        return

    # Slow tests train real models; skipped unless --runslow is passed
    if not config.getoption("--runslow"):
        skip_slow = pytest.mark.skip(reason="need --runslow option to run")
        for item in items:
            if "slow" in item.keywords:
                item.add_marker(skip_slow)
