"""
Mask composition.

    healthy_out     B' = B_int * M + A * (1 - M)
    reconstruction  A' = A * M + B_int * (1 - M)

The single channel mask broadcasts over image channels. Nothing is clamped after composition: both
outputs are convex combinations, so they stay in [-1, 1] whenever the inputs do.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from healthy_translate.datasets.images import write_png


@dataclass
class CompositePair:
    healthy_out: torch.Tensor  # B'
    reconstruction: torch.Tensor  # A'


def _check_inputs(a: torch.Tensor, b_int: torch.Tensor, m: torch.Tensor) -> None:
    if a.shape != b_int.shape:
        raise ValueError(
            f"Image and intermediate shapes differ: {tuple(a.shape)} vs {tuple(b_int.shape)}"
        )
    if m.ndim != a.ndim or m.shape[0] != a.shape[0] or m.shape[2:] != a.shape[2:]:
        raise ValueError(
            f"Mask shape {tuple(m.shape)} does not match image shape {tuple(a.shape)}"
        )
    if m.shape[1] not in (1, a.shape[1]):
        raise ValueError(
            f"Mask must have 1 or {a.shape[1]} channels, got {m.shape[1]}"
        )
    with torch.no_grad():
        if m.numel() and (m.min() < 0 or m.max() > 1 or not torch.isfinite(m).all()):
            raise ValueError(
                f"Mask values must be within [0, 1], got range [{m.min().item()}, {m.max().item()}]"
            )


def compose_healthy(a: torch.Tensor, b_int: torch.Tensor, m: torch.Tensor) -> torch.Tensor:
    _check_inputs(a, b_int, m)
    return b_int * m + a * (1 - m)


def compose_reconstruction(
    a: torch.Tensor, b_int: torch.Tensor, m: torch.Tensor
) -> torch.Tensor:
    _check_inputs(a, b_int, m)
    return a * m + b_int * (1 - m)


def compose(a: torch.Tensor, b_int: torch.Tensor, m: torch.Tensor) -> CompositePair:
    return CompositePair(
        healthy_out=compose_healthy(a, b_int, m),
        reconstruction=compose_reconstruction(a, b_int, m),
    )


def difference_map(x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    if x.shape != y.shape:
        raise ValueError(
            f"Cannot compare images of different shapes: {tuple(x.shape)} vs {tuple(y.shape)}"
        )
    return (x - y).abs()


def heatmap_pixels(diff: np.ndarray | torch.Tensor) -> np.ndarray:
    """Scale a (C, H, W) or (H, W) difference map linearly from [0, 2] to 8-bit (H, W).

    Channels are averaged first.
    """
    if isinstance(diff, torch.Tensor):
        diff = diff.detach().cpu().numpy()
    diff = np.asarray(diff, dtype=np.float64)
    if diff.ndim == 3:
        diff = diff.mean(axis=0)
    if diff.ndim != 2:
        raise ValueError(f"Expected a (C, H, W) or (H, W) difference map, got {diff.shape}")
    return np.rint(np.clip(diff, 0.0, 2.0) * 127.5).astype(np.uint8)


def save_heatmap(diff: np.ndarray | torch.Tensor, path: Path) -> Path:
    path = Path(path)
    write_png(path, heatmap_pixels(diff))
    return path
