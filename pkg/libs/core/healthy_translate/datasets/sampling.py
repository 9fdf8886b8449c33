"""
Datasets and loaders over split records.

Set A and set B are sampled independently with replacement; there is no correspondence between the
i-th image of the two batches. Training batches come from `UnpairedBatchSampler`, which draws the
indices of batch k from a torch generator seeded by (seed, k). The batch sequence is therefore a
function of the seed alone: it does not depend on how many loader workers decode ahead, and a
resumed run continues it from the number of batches already drawn.
"""

from itertools import count
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch.utils.data import DataLoader, Dataset, Sampler

from healthy_translate.datamodel import SampleRecord
from healthy_translate.datasets.images import ImageCache, normalize
from healthy_translate.errors import DatasetError

# keeps batch seeds apart from the other streams derived from the run seed
BATCH_STREAM = 7

UnpairedBatch = Tuple[torch.Tensor, torch.Tensor]


class RecordDataset(Dataset[torch.Tensor]):
    """Images of a list of records as (C, H, W) float32 tensors in [-1, 1]."""

    def __init__(
        self,
        records: Sequence[SampleRecord],
        channels: int,
        image_size: Optional[int] = None,
        cache: Optional[ImageCache] = None,
    ):
        self.records = list(records)
        self.channels = channels
        self.image_size = image_size
        self.cache = cache if cache is not None else ImageCache()

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, index: int) -> torch.Tensor:
        pixels = self.cache.get(self.records[index].path, self.channels, self.image_size)
        return torch.from_numpy(normalize(pixels))


class UnpairedDataset(Dataset[UnpairedBatch]):
    """Set A and set B behind one index: item (i, j) is (A[i], B[j])."""

    def __init__(self, set_a: RecordDataset, set_b: RecordDataset):
        self.set_a = set_a
        self.set_b = set_b

    def __len__(self) -> int:
        return max(len(self.set_a), len(self.set_b))

    def __getitem__(self, index: Tuple[int, int]) -> UnpairedBatch:  # type: ignore[override]
        i, j = index
        return self.set_a[i], self.set_b[j]


def stack_images(items: Sequence[torch.Tensor]) -> torch.Tensor:
    """Collate images into one (N, C, H, W) batch."""
    if not items:
        raise DatasetError("Cannot load an empty batch")
    shapes = {tuple(t.shape) for t in items}
    if len(shapes) > 1:
        raise DatasetError(f"Images in a batch must share one size, got {sorted(shapes)}")
    return torch.stack(list(items))


def stack_unpaired(items: Sequence[UnpairedBatch]) -> UnpairedBatch:
    return stack_images([a for a, _ in items]), stack_images([b for _, b in items])


def load_batch(
    records: Sequence[SampleRecord],
    channels: int,
    image_size: Optional[int] = None,
    cache: Optional[ImageCache] = None,
) -> torch.Tensor:
    """Decode records into an (N, C, H, W) float32 tensor in [-1, 1]."""
    if cache is None:
        cache = ImageCache(max_items=0)
    dataset = RecordDataset(records, channels, image_size, cache)
    return stack_images([dataset[i] for i in range(len(dataset))])


def record_loader(
    records: Sequence[SampleRecord],
    channels: int,
    image_size: Optional[int],
    batch_size: int,
    cache: Optional[ImageCache] = None,
) -> DataLoader:
    """Batches of `records` in order, for selection and evaluation."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be at least 1, got {batch_size}")
    return DataLoader(
        RecordDataset(records, channels, image_size, cache),
        batch_size=batch_size,
        shuffle=False,
        collate_fn=stack_images,
    )


def draw_indices(
    n_a: int, n_b: int, batch_size: int, rng: torch.Generator
) -> Tuple[torch.Tensor, torch.Tensor]:
    if n_a == 0 or n_b == 0:
        raise DatasetError(
            f"Cannot sample unpaired batches from an empty set (set A: {n_a}, set B: {n_b})"
        )
    if batch_size < 1:
        raise ValueError(f"batch_size must be at least 1, got {batch_size}")
    idx_a = torch.randint(n_a, (batch_size,), generator=rng)
    idx_b = torch.randint(n_b, (batch_size,), generator=rng)
    return idx_a, idx_b


def sample_unpaired_batch(
    set_a: Sequence[SampleRecord],
    set_b: Sequence[SampleRecord],
    batch_size: int,
    rng: torch.Generator,
    channels: int = 1,
    image_size: Optional[int] = None,
    cache: Optional[ImageCache] = None,
) -> UnpairedBatch:
    idx_a, idx_b = draw_indices(len(set_a), len(set_b), batch_size, rng)
    batch_a = load_batch([set_a[i] for i in idx_a.tolist()], channels, image_size, cache)
    batch_b = load_batch([set_b[i] for i in idx_b.tolist()], channels, image_size, cache)
    return batch_a, batch_b


def batch_generator(seed: int, batch: int) -> torch.Generator:
    """The generator batch number `batch` of a run seeded `seed` draws its indices from."""
    state = np.random.SeedSequence([seed, BATCH_STREAM, batch]).generate_state(1, np.uint64)
    return torch.Generator().manual_seed(int(state[0]))


class UnpairedBatchSampler(Sampler[List[Tuple[int, int]]]):
    """Endless stream of index batches [(i, j), ...] starting at batch number `start`."""

    def __init__(self, n_a: int, n_b: int, batch_size: int, seed: int, start: int = 0):
        # validates set sizes and batch_size up front
        draw_indices(n_a, n_b, batch_size, torch.Generator().manual_seed(0))
        if start < 0:
            raise ValueError(f"start must be nonnegative, got {start}")
        self.n_a = n_a
        self.n_b = n_b
        self.batch_size = batch_size
        self.seed = seed
        self.start = start

    def __iter__(self) -> Iterator[List[Tuple[int, int]]]:
        for batch in count(self.start):
            rng = batch_generator(self.seed, batch)
            idx_a, idx_b = draw_indices(self.n_a, self.n_b, self.batch_size, rng)
            yield list(zip(idx_a.tolist(), idx_b.tolist()))


def unpaired_loader(
    set_a: Sequence[SampleRecord],
    set_b: Sequence[SampleRecord],
    batch_size: int,
    seed: int,
    start: int = 0,
    channels: int = 1,
    image_size: Optional[int] = None,
    num_workers: int = 0,
    cache: Optional[ImageCache] = None,
) -> DataLoader:
    """Endless training loader of (A, B) batches. Batch k is the same for any `num_workers`."""
    cache = cache if cache is not None else ImageCache()
    dataset = UnpairedDataset(
        RecordDataset(set_a, channels, image_size, cache),
        RecordDataset(set_b, channels, image_size, cache),
    )
    return DataLoader(
        dataset,
        batch_sampler=UnpairedBatchSampler(len(set_a), len(set_b), batch_size, seed, start),
        collate_fn=stack_unpaired,
        num_workers=num_workers,
    )
