from pathlib import Path

import torch
from torchvision.utils import make_grid

from healthy_translate.composition import compose_healthy, difference_map
from healthy_translate.datasets.images import write_png
from healthy_translate.networks.models import Generator, generator_forward

SAMPLE_COLUMNS = ("input", "intermediate", "mask", "healthy_out", "difference")


@torch.no_grad()
def sample_grid(generator: Generator, batch_a: torch.Tensor) -> torch.Tensor:
    """(3, H', W') grid in [0, 1], one row per image: A | B_int | M | B' | |A - B'|."""
    out = generator_forward(generator, batch_a)
    healthy = compose_healthy(batch_a, out.intermediate, out.mask)
    channels = batch_a.shape[1]
    columns = [
        (batch_a + 1) / 2,
        (out.intermediate + 1) / 2,
        out.mask.expand(-1, channels, -1, -1),
        (healthy + 1) / 2,
        difference_map(batch_a, healthy) / 2,
    ]
    tiles = torch.stack(columns, dim=1).flatten(0, 1).clamp(0, 1).cpu()
    return make_grid(tiles, nrow=len(columns), padding=2, pad_value=1.0)


def save_sample_grid(generator: Generator, batch_a: torch.Tensor, path: Path | str) -> Path:
    path = Path(path)
    grid = sample_grid(generator, batch_a)
    pixels = (grid * 255).round().to(torch.uint8).numpy()
    write_png(path, pixels)
    return path
