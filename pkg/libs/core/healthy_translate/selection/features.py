"""
Feature embedders and streaming Gaussian statistics for the Frechet distance.

Two embedders are available: a randomly initialized convolutional network fixed by a seed, which
needs no downloaded weights, and any TorchScript module mapping (N, C, H, W) images in [-1, 1] to
(N, d) features.
"""

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
import torch
import torch.nn as nn

from healthy_translate.datamodel import SelectConfig

N_RANDOM_LAYERS = 4
RANDOM_BASE_WIDTH = 32


@dataclass
class FeatureStats:
    mean: np.ndarray  # (d,)
    covariance: np.ndarray  # (d, d), symmetric
    n: int

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


class FeatureStatsAccumulator:
    """Running mean and scatter matrix, merged batch by batch with the pairwise update, so the
    result does not depend on how the stream is split into batches."""

    def __init__(self):
        self.n = 0
        self.mean: Optional[np.ndarray] = None
        self.scatter: Optional[np.ndarray] = None

    def update(self, features: np.ndarray) -> None:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2:
            raise ValueError(f"Expected (N, d) features, got shape {features.shape}")
        n_batch = features.shape[0]
        if n_batch == 0:
            return
        if not np.isfinite(features).all():
            raise ValueError("Features contain non-finite values")
        batch_mean = features.mean(axis=0)
        centered = features - batch_mean
        batch_scatter = centered.T @ centered
        if self.mean is None or self.scatter is None:
            self.n, self.mean, self.scatter = n_batch, batch_mean, batch_scatter
            return
        if batch_mean.shape != self.mean.shape:
            raise ValueError(
                f"Feature dimension changed from {self.mean.shape[0]} to {batch_mean.shape[0]}"
            )
        total = self.n + n_batch
        delta = batch_mean - self.mean
        self.mean = self.mean + delta * (n_batch / total)
        correction = np.outer(delta, delta) * (self.n * n_batch / total)
        self.scatter = self.scatter + batch_scatter + correction
        self.n = total

    def finalize(self) -> FeatureStats:
        if self.n < 2 or self.mean is None or self.scatter is None:
            raise ValueError(f"Feature statistics need at least 2 samples, got {self.n}")
        covariance = self.scatter / (self.n - 1)
        covariance = (covariance + covariance.T) / 2
        return FeatureStats(mean=self.mean.copy(), covariance=covariance, n=self.n)


def stats_from_features(features: np.ndarray) -> FeatureStats:
    accumulator = FeatureStatsAccumulator()
    accumulator.update(features)
    return accumulator.finalize()


class RandomConvEmbedder(nn.Module):
    """Strided conv stack with He-scaled weights drawn from `seed`, then average and max pooling
    and a fixed random projection to `feature_dim`. Accepts any spatial size."""

    def __init__(self, channels: int, feature_dim: int = 64, seed: int = 0):
        super().__init__()
        self.channels = channels
        self.feature_dim = feature_dim
        layers = []
        in_ch = channels
        for depth in range(N_RANDOM_LAYERS):
            out_ch = RANDOM_BASE_WIDTH * 2**depth
            layers += [
                nn.Conv2d(in_ch, out_ch, kernel_size=4, stride=2, padding=1),
                nn.LeakyReLU(0.2),
            ]
            in_ch = out_ch
        self.features = nn.Sequential(*layers)
        self.projection = nn.Linear(2 * in_ch, feature_dim)
        self._init_from_seed(seed)
        self.requires_grad_(False)
        self.eval()

    def _init_from_seed(self, seed: int) -> None:
        generator = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for m in self.modules():
                if isinstance(m, (nn.Conv2d, nn.Linear)):
                    fan_in = m.weight[0].numel()
                    noise = torch.randn(m.weight.shape, generator=generator)
                    m.weight.copy_(noise * math.sqrt(2.0 / fan_in))
                    assert m.bias is not None
                    m.bias.zero_()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ValueError(
                f"Embedder expects {self.channels} channel images, got shape {tuple(x.shape)}"
            )
        h = self.features(x)
        pooled = torch.cat([h.mean(dim=(2, 3)), h.amax(dim=(2, 3))], dim=1)
        return self.projection(pooled)


class TorchScriptEmbedder(nn.Module):
    """Wraps a pretrained TorchScript embedder and checks its output shape."""

    def __init__(self, path: Path | str, channels: int):
        super().__init__()
        self.channels = channels
        try:
            self.module = torch.jit.load(str(path), map_location="cpu")
        except (RuntimeError, ValueError) as e:
            raise ValueError(f"Cannot load embedder {path}: {e}") from e
        self.module.eval()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ValueError(
                f"Embedder expects {self.channels} channel images, got shape {tuple(x.shape)}"
            )
        features = self.module(x)
        if not isinstance(features, torch.Tensor) or features.ndim != 2:
            raise ValueError("Embedder must return an (N, d) tensor")
        return features


def build_extractor(cfg: SelectConfig, channels: int) -> nn.Module:
    if cfg.extractor == "pretrained":
        assert cfg.extractor_path is not None
        return TorchScriptEmbedder(cfg.extractor_path, channels)
    return RandomConvEmbedder(channels, feature_dim=cfg.feature_dim, seed=cfg.extractor_seed)


@torch.no_grad()
def extract_features(
    batches: Iterable[torch.Tensor],
    extractor: nn.Module,
    device: Optional[torch.device] = None,
) -> FeatureStats:
    """Mean and covariance of the embedder's features over a stream of image batches."""
    accumulator = FeatureStatsAccumulator()
    for batch in batches:
        if device is not None:
            batch = batch.to(device)
        accumulator.update(extractor(batch).double().cpu().numpy())
    return accumulator.finalize()
