import pytest
import torch

from healthy_translate.errors import CheckpointError
from healthy_translate.networks.models import Generator
from healthy_translate.trainer.state import (
    checkpoint_archive,
    load_checkpoint,
    load_generator,
    new_train_state,
    save_checkpoint,
    write_archive,
)


def _assert_same_parameters(m1: torch.nn.Module, m2: torch.nn.Module):
    s1, s2 = m1.state_dict(), m2.state_dict()
    assert s1.keys() == s2.keys()
    for key in s1:
        assert torch.equal(s1[key], s2[key]), key


def test_fresh_state_is_seeded(tiny_train_config):
    s1 = new_train_state(tiny_train_config)
    s2 = new_train_state(tiny_train_config)
    _assert_same_parameters(s1.generator, s2.generator)
    _assert_same_parameters(s1.critic, s2.critic)
    assert torch.equal(s1.torch_rng.get_state(), s2.torch_rng.get_state())
    assert s1.iteration == 0
    assert s1.batches_drawn == 0


def test_round_trip(tiny_train_config, tmp_path):
    state = new_train_state(tiny_train_config)
    state.iteration = 7
    state.batches_drawn = 13
    torch.rand(2, generator=state.torch_rng)
    path = save_checkpoint(state, tmp_path / "ckpt" / "state.pt")
    assert path.exists()
    assert not (tmp_path / "ckpt" / "state.pt.tmp").exists()

    restored = load_checkpoint(path, tiny_train_config)
    assert restored.iteration == 7
    _assert_same_parameters(state.generator, restored.generator)
    _assert_same_parameters(state.critic, restored.critic)
    assert restored.batches_drawn == 13
    assert torch.equal(
        torch.rand(3, generator=state.torch_rng), torch.rand(3, generator=restored.torch_rng)
    )


def test_round_trip_without_config(tiny_train_config, tmp_path):
    state = new_train_state(tiny_train_config)
    path = save_checkpoint(state, tmp_path / "state.pt")
    restored = load_checkpoint(path)
    assert restored.config.width_scale == tiny_train_config.width_scale
    assert restored.config.image_size == 64
    assert restored.config.resume_from is None


def test_optimizer_state_round_trip(tiny_train_config, tmp_path):
    state = new_train_state(tiny_train_config)
    x = torch.rand(1, 1, 64, 64) * 2 - 1
    state.critic(x).mean().backward()
    state.opt_d.step()
    path = save_checkpoint(state, tmp_path / "state.pt")
    restored = load_checkpoint(path, tiny_train_config)
    saved = state.opt_d.state_dict()["state"]
    loaded = restored.opt_d.state_dict()["state"]
    assert saved.keys() == loaded.keys()
    for key in saved:
        assert torch.equal(saved[key]["exp_avg"], loaded[key]["exp_avg"])
        assert torch.equal(saved[key]["exp_avg_sq"], loaded[key]["exp_avg_sq"])


def test_mismatched_image_size(tiny_train_config, tmp_path):
    path = save_checkpoint(new_train_state(tiny_train_config), tmp_path / "state.pt")
    other = tiny_train_config.model_copy(update={"image_size": 128})
    with pytest.raises(CheckpointError, match="image_size=64"):
        load_checkpoint(path, other)


def test_mismatched_channels(tiny_train_config, tmp_path):
    path = save_checkpoint(new_train_state(tiny_train_config), tmp_path / "state.pt")
    other = tiny_train_config.model_copy(update={"channels": 3})
    with pytest.raises(CheckpointError, match="channels"):
        load_checkpoint(path, other)


def test_corrupt_archive(tmp_path):
    path = tmp_path / "broken.pt"
    path.write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointError, match="corrupt"):
        load_checkpoint(path)


def test_missing_archive(tmp_path):
    with pytest.raises(CheckpointError, match="does not exist"):
        load_generator(tmp_path / "nope.pt")


def test_missing_keys(tmp_path):
    path = tmp_path / "partial.pt"
    torch.save({"header": {}}, path)
    with pytest.raises(CheckpointError, match="missing generator"):
        load_checkpoint(path)


def test_newer_version(tiny_train_config, tmp_path):
    path = save_checkpoint(new_train_state(tiny_train_config), tmp_path / "state.pt")
    archive = torch.load(path, weights_only=True)
    archive["header"]["version"] = 2
    torch.save(archive, path)
    with pytest.raises(CheckpointError, match="newer"):
        load_checkpoint(path)


def test_load_generator(tiny_train_config, tmp_path):
    state = new_train_state(tiny_train_config)
    state.iteration = 3
    path = save_checkpoint(state, tmp_path / "state.pt")
    generator, header = load_generator(path)
    assert isinstance(generator, Generator)
    assert not generator.training
    assert header.iteration == 3
    assert header.image_size == 64
    _assert_same_parameters(state.generator, generator)


def test_copied_archive_ignores_later_updates(tiny_train_config, tmp_path):
    state = new_train_state(tiny_train_config)
    archive = checkpoint_archive(state, copy_tensors=True)
    before = {k: v.clone() for k, v in state.critic.state_dict().items()}
    x = torch.rand(1, 1, 64, 64) * 2 - 1
    state.critic(x).mean().backward()
    state.opt_d.step()
    state.iteration = 1
    state.batches_drawn = 1

    path = write_archive(archive, tmp_path / "before.pt")
    restored = load_checkpoint(path, tiny_train_config)
    assert restored.iteration == 0
    assert restored.batches_drawn == 0
    for key, value in restored.critic.state_dict().items():
        assert torch.equal(value, before[key]), key
    assert restored.opt_d.state_dict()["state"] == {}


def test_invalid_batch_count(tiny_train_config, tmp_path):
    path = save_checkpoint(new_train_state(tiny_train_config), tmp_path / "state.pt")
    archive = torch.load(path, weights_only=True)
    archive["batches_drawn"] = -1
    torch.save(archive, path)
    with pytest.raises(CheckpointError, match="batch count"):
        load_checkpoint(path)
