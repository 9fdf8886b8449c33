from itertools import islice

import numpy as np
import pytest
import torch

from healthy_translate.datamodel import SampleRecord
from healthy_translate.datasets.images import write_png
from healthy_translate.datasets.sampling import (
    RecordDataset,
    UnpairedBatchSampler,
    batch_generator,
    load_batch,
    record_loader,
    sample_unpaired_batch,
    unpaired_loader,
)
from healthy_translate.datasets.splits import load_split
from healthy_translate.errors import DatasetError


def _record(path, value, size=8):
    write_png(path, np.full((size, size), value, dtype=np.uint8))
    return SampleRecord(path=path)


def _rng(seed):
    return torch.Generator().manual_seed(seed)


@pytest.fixture
def two_sets(tmp_path):
    set_a = [_record(tmp_path / "a0.png", 0), _record(tmp_path / "a1.png", 255)]
    set_b = [_record(tmp_path / f"b{i}.png", 50 * i) for i in range(4)]
    return set_a, set_b


def test_singleton_sets(tmp_path):
    a = _record(tmp_path / "a.png", 0)
    b = _record(tmp_path / "b.png", 255)
    batch_a, batch_b = sample_unpaired_batch([a], [b], 1, _rng(0))
    assert batch_a.shape == (1, 1, 8, 8)
    assert torch.all(batch_a == -1.0)
    assert torch.all(batch_b == 1.0)


def test_range_and_dtype(two_sets):
    batch_a, batch_b = sample_unpaired_batch(*two_sets, 4, _rng(0))
    assert batch_a.dtype == torch.float32
    for batch in (batch_a, batch_b):
        assert batch.min() >= -1.0 and batch.max() <= 1.0


def test_rng_reset_reproduces(two_sets):
    rng = _rng(5)
    state = rng.get_state()
    first = [sample_unpaired_batch(*two_sets, 3, rng) for _ in range(3)]
    rng.set_state(state)
    second = [sample_unpaired_batch(*two_sets, 3, rng) for _ in range(3)]
    for (a1, b1), (a2, b2) in zip(first, second):
        assert torch.equal(a1, a2) and torch.equal(b1, b2)


def test_consecutive_calls_differ(two_sets):
    rng = _rng(5)
    a1, b1 = sample_unpaired_batch(*two_sets, 16, rng)
    a2, b2 = sample_unpaired_batch(*two_sets, 16, rng)
    assert not (torch.equal(a1, a2) and torch.equal(b1, b2))


def test_uniform_frequency(two_sets):
    rng = _rng(11)
    draws = 0
    bright = 0
    for _ in range(100):
        batch_a, _ = sample_unpaired_batch(*two_sets, 100, rng)
        bright += int((batch_a[:, 0, 0, 0] > 0).sum())
        draws += batch_a.shape[0]
    assert draws == 10_000
    assert abs(bright / draws - 0.5) <= 0.02


def test_empty_set(two_sets):
    with pytest.raises(DatasetError, match="empty set"):
        sample_unpaired_batch([], two_sets[1], 1, _rng(0))


def test_invalid_batch_size(two_sets):
    with pytest.raises(ValueError, match="batch_size"):
        sample_unpaired_batch(*two_sets, 0, _rng(0))


def test_decode_failure(tmp_path, two_sets):
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"garbage")
    with pytest.raises(DatasetError, match="Cannot decode"):
        sample_unpaired_batch([SampleRecord(path=bad)], two_sets[1], 1, _rng(0))


def test_load_batch_mixed_sizes(tmp_path):
    records = [_record(tmp_path / "s.png", 0, 8), _record(tmp_path / "l.png", 0, 16)]
    with pytest.raises(DatasetError, match="share one size"):
        load_batch(records, 1)


def test_record_dataset(two_sets):
    dataset = RecordDataset(two_sets[1], channels=3)
    assert len(dataset) == 4
    item = dataset[2]
    assert item.shape == (3, 8, 8)
    assert item.dtype == torch.float32


def test_record_loader_keeps_order(two_sets):
    records = two_sets[1]
    batches = list(record_loader(records, 1, 8, batch_size=3))
    assert [b.shape[0] for b in batches] == [3, 1]
    assert torch.equal(torch.cat(batches), load_batch(records, 1, 8))


def test_record_loader_invalid_batch_size(two_sets):
    with pytest.raises(ValueError, match="batch_size"):
        record_loader(two_sets[0], 1, None, batch_size=0)


def test_loader_batch_k_matches_function(two_sets):
    loader = unpaired_loader(*two_sets, batch_size=3, seed=2)
    for k, (a, b) in enumerate(islice(iter(loader), 5)):
        ea, eb = sample_unpaired_batch(*two_sets, 3, batch_generator(2, k))
        assert torch.equal(a, ea) and torch.equal(b, eb)


def test_loader_start_continues_sequence(two_sets):
    full = list(islice(iter(unpaired_loader(*two_sets, batch_size=3, seed=9)), 5))
    resumed = list(islice(iter(unpaired_loader(*two_sets, batch_size=3, seed=9, start=2)), 3))
    for (a1, b1), (a2, b2) in zip(full[2:], resumed):
        assert torch.equal(a1, a2) and torch.equal(b1, b2)


def test_loader_seeds_differ(two_sets):
    first = next(iter(unpaired_loader(*two_sets, batch_size=16, seed=1)))
    second = next(iter(unpaired_loader(*two_sets, batch_size=16, seed=2)))
    assert not (torch.equal(first[0], second[0]) and torch.equal(first[1], second[1]))


def test_worker_loader_gives_same_batches(two_sets):
    plain = list(islice(iter(unpaired_loader(*two_sets, batch_size=3, seed=4)), 4))
    workers = list(
        islice(iter(unpaired_loader(*two_sets, batch_size=3, seed=4, num_workers=1)), 4)
    )
    for (a1, b1), (a2, b2) in zip(plain, workers):
        assert torch.equal(a1, a2) and torch.equal(b1, b2)


def test_batch_sampler_is_seeded():
    first = list(islice(iter(UnpairedBatchSampler(5, 7, 4, seed=3)), 3))
    second = list(islice(iter(UnpairedBatchSampler(5, 7, 4, seed=3)), 3))
    assert first == second
    for batch in first:
        assert len(batch) == 4
        assert all(0 <= i < 5 and 0 <= j < 7 for i, j in batch)


def test_batch_sampler_rejects_empty():
    with pytest.raises(DatasetError):
        UnpairedBatchSampler(0, 3, batch_size=1, seed=0)


def test_loader_on_benchmark(tiny_benchmark):
    set_a = load_split(tiny_benchmark, "trainA")
    set_b = load_split(tiny_benchmark, "trainB")
    a, b = next(iter(unpaired_loader(set_a, set_b, batch_size=2, seed=0, image_size=64)))
    assert a.shape == (2, 1, 64, 64)
    assert b.shape == (2, 1, 64, 64)
