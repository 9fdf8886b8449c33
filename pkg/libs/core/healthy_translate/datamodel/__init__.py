"""
Data models for healthy-translate: dataset records, run configs and report artifacts.

Run configs (`DatasetSpec`, `ImportDataConfig`, `TrainConfig`, `SelectConfig`, `EvalConfig`,
`ScoreConfig`) reject unknown keys. JSON artifacts written to disk (`BenchmarkManifest`,
`EvalReport`) extend `ArtifactModel` and are versioned.
"""

import copy
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, FilePath, model_validator
from typing_extensions import Self

from .basemodel import ArtifactModel

__all__ = [
    "basemodel",
    "ArtifactModel",
    "SampleLabel",
    "Split",
    "SampleRecord",
    "DatasetSpec",
    "SynthDataConfig",
    "ImportDataConfig",
    "SplitCounts",
    "BenchmarkManifest",
    "LossWeights",
    "TrainConfig",
    "TRAIN_PRESETS",
    "CheckpointHeader",
    "SelectConfig",
    "SelectionRow",
    "ScoreReduction",
    "ThresholdRule",
    "EvalConfig",
    "ScoreConfig",
    "SampleScore",
    "EvalReport",
]

# Critic downsamples by 2 six times
SIZE_MULTIPLE = 64


def _check_image_size(image_size: int) -> None:
    if image_size <= 0 or image_size % SIZE_MULTIPLE != 0:
        raise ValueError(
            f"image_size must be a positive multiple of {SIZE_MULTIPLE}, got {image_size}"
        )


class SampleLabel(str, Enum):
    healthy = "healthy"
    anomalous = "anomalous"


class Split(str, Enum):
    train_a = "trainA"
    train_b = "trainB"
    val = "val"
    test = "test"

    @property
    def labeled(self) -> bool:
        return self in (Split.val, Split.test)


class SampleRecord(BaseModel):
    """One image of a split. Records are immutable once loaded."""

    model_config = ConfigDict(frozen=True)

    path: Path = Field(description="Absolute path of the image file.")
    label: Optional[SampleLabel] = Field(
        default=None,
        description="Ground truth label. Only ever set for val/test records.",
    )
    gt_mask_path: Optional[Path] = Field(
        default=None,
        description="Binary ground truth lesion mask (synthetic benchmark only).",
    )


class DatasetSpec(BaseModel):
    """Parameters of the synthetic benchmark. Generation is a pure function of these values."""

    model_config = ConfigDict(extra="forbid")

    image_size: int = Field(default=64, description="Pixels per side.")
    channels: int = Field(
        default=1,
        ge=1,
        description="Channels per image. Grayscale content is replicated to every channel.",
    )
    n_healthy_B: int = Field(default=400, gt=0, description="Healthy images in trainB.")
    n_mixed_healthy_A: int = Field(
        default=140, gt=0, description="Healthy images in the mixed set trainA."
    )
    n_mixed_anomalous_A: int = Field(
        default=60,
        ge=0,
        description="Lesioned images in the mixed set trainA. Zero builds a healthy-only trainA.",
    )
    n_val: int = Field(
        default=40, gt=0, description="Validation images per class (healthy, anomalous)."
    )
    n_test: int = Field(
        default=60, gt=0, description="Test images per class (healthy, anomalous)."
    )
    lesion_size_range: Tuple[int, int] = Field(
        default=(8, 16), description="Inclusive range of the lesion side length in pixels."
    )
    lesion_contrast: float = Field(
        default=0.5,
        ge=0.0,
        le=1.0,
        description="Additive lesion intensity as a fraction of the full 8-bit range.",
    )
    seed: int = Field(default=0, ge=0, description="Seed for every random draw.")

    @model_validator(mode="after")
    def validate_sizes(self) -> Self:
        _check_image_size(self.image_size)
        lo, hi = self.lesion_size_range
        if lo < 1 or hi < lo or 2 * hi >= self.image_size:
            raise ValueError(
                f"lesion_size_range must satisfy 1 <= low <= high < image_size/2, got {self.lesion_size_range} for image_size {self.image_size}"
            )
        return self


class SynthDataConfig(DatasetSpec):
    output_dir: Path = Field(description="Directory the benchmark tree is written to.")


class ImportDataConfig(BaseModel):
    """Build a dataset tree from user image folders."""

    model_config = ConfigDict(extra="forbid")

    output_dir: Path = Field(description="Directory the dataset tree is written to.")
    image_size: int = Field(default=64, description="Pixels per side after resizing.")
    channels: Literal[1, 3] = Field(default=1, description="1 for grayscale, 3 for RGB.")
    sources: Dict[str, Path] = Field(
        description="Source folders keyed by trainA, trainB, val_healthy, val_anomalous, test_healthy, test_anomalous."
    )

    @model_validator(mode="after")
    def validate_image_size(self) -> Self:
        _check_image_size(self.image_size)
        return self


class SplitCounts(BaseModel):
    healthy: int = 0
    anomalous: int = 0


class BenchmarkManifest(ArtifactModel):
    """Written to `benchmark.json` at the root of a synthetic benchmark tree."""

    spec: DatasetSpec
    counts: Dict[str, SplitCounts] = Field(
        description="Per split counts of healthy and anomalous images. Labels for trainA are only recorded here, never in its manifest.",
    )


class LossWeights(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lambda_gp: float = Field(default=10.0, ge=0.0, description="Gradient penalty weight.")
    lambda_rec: float = Field(default=1.0, ge=0.0, description="Reconstruction loss weight.")
    lambda_id: float = Field(default=1.0, ge=0.0, description="Identity loss weight.")
    lambda_f: float = Field(default=0.1, ge=0.0, description="Focus loss weight.")
    lambda_fs: float = Field(
        default=1.0, ge=0.0, description="Weight of the mask size term of the focus loss."
    )
    lambda_fz: float = Field(
        default=1.0,
        ge=0.0,
        description="Weight of the mask binarization term of the focus loss.",
    )
    epsilon_focus: float = Field(
        default=1e-6,
        gt=0.0,
        description="Keeps the binarization term finite at a mask value of 0.5.",
    )


TRAIN_PRESETS: Dict[str, Dict[str, Any]] = {
    "full_256": {
        "image_size": 256,
        "batch_size": 16,
        "total_iterations": 400_000,
        "decay_iterations": 100_000,
        "checkpoint_every": 10_000,
    },
    "full_128": {
        "image_size": 128,
        "batch_size": 32,
        "total_iterations": 400_000,
        "decay_iterations": 100_000,
        "checkpoint_every": 10_000,
    },
    # Desk scale: our own setting, sized for the synthetic benchmark
    "desk_64": {
        "image_size": 64,
        "batch_size": 16,
        "total_iterations": 10_000,
        "decay_iterations": 2_500,
        "checkpoint_every": 1_000,
        "sample_every": 1_000,
    },
}


def _merge_preset(data: Any) -> Any:
    if not isinstance(data, dict) or "preset" not in data:
        return data
    data = dict(data)
    name = data.pop("preset")
    if name not in TRAIN_PRESETS:
        raise ValueError(
            f"Unknown preset '{name}'. Available presets: {', '.join(sorted(TRAIN_PRESETS))}"
        )
    merged = copy.deepcopy(TRAIN_PRESETS[name])
    merged.update(data)
    return merged


class TrainConfig(BaseModel):
    """Hyperparameters, schedule, seeds and paths of a training run."""

    model_config = ConfigDict(extra="forbid")

    data_root: Path = Field(
        description="Dataset tree root. Only trainA and trainB are read during training."
    )
    image_size: int = Field(default=256, description="Pixels per side.")
    channels: int = Field(default=1, ge=1, description="Image channels.")
    width_scale: float = Field(
        default=1.0,
        gt=0.0,
        description="Multiplies every layer width. 1.0 is the published architecture.",
    )
    batch_size: int = Field(default=16, ge=1)
    total_iterations: int = Field(default=400_000, ge=1)
    decay_iterations: int = Field(
        default=100_000,
        ge=0,
        description="Final iterations over which the learning rate decays linearly to zero.",
    )
    base_lr: float = Field(default=1e-4, gt=0.0)
    betas: Tuple[float, float] = Field(
        default=(0.5, 0.999), description="Adam moment coefficients."
    )
    critic_steps_per_gen_step: int = Field(
        default=2,
        ge=1,
        description="Critic updates per generator update.",
    )
    adv_on_healthy: bool = Field(
        default=True,
        description="Also drive the generator adversarially on set B inputs.",
    )
    weights: LossWeights = Field(default_factory=LossWeights)
    seed: int = Field(default=0, ge=0)
    checkpoint_every: int = Field(default=10_000, ge=1)
    log_every: int = Field(
        default=100, ge=1, description="Iterations between logged loss summaries."
    )
    sample_every: int = Field(
        default=0,
        ge=0,
        description="Iterations between sample grid images. 0 disables sample grids.",
    )
    prefetch: bool = Field(
        default=False,
        description="Decode batches ahead in a loader worker. Batch order is unchanged.",
    )
    resume_from: Optional[FilePath] = Field(
        default=None, description="Checkpoint to continue training from."
    )
    device: Optional[str] = Field(
        default=None,
        description="cpu, cuda, cuda:N or auto. Defaults to the user setting.",
    )

    @model_validator(mode="before")
    @classmethod
    def apply_preset(cls, data: Any) -> Any:
        return _merge_preset(data)

    @model_validator(mode="after")
    def validate_schedule(self) -> Self:
        _check_image_size(self.image_size)
        if self.decay_iterations > self.total_iterations:
            raise ValueError(
                f"decay_iterations ({self.decay_iterations}) must not exceed total_iterations ({self.total_iterations})"
            )
        if round(64 * self.width_scale) < 1:
            raise ValueError(f"width_scale {self.width_scale} leaves layers with no channels")
        b1, b2 = self.betas
        if not (0.0 <= b1 < 1.0 and 0.0 <= b2 < 1.0):
            raise ValueError(f"betas must be in [0, 1), got {self.betas}")
        return self

    @classmethod
    def from_preset(cls, name: str, **overrides: Any) -> "TrainConfig":
        return cls.model_validate({"preset": name, **overrides})


class CheckpointHeader(BaseModel):
    version: int = 1
    channels: int
    image_size: int
    width_scale: float
    iteration: int


class SelectConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    data_root: Path = Field(description="Dataset tree root.")
    checkpoints_dir: Path = Field(
        description="Directory of checkpoints to rank, usually a training run's checkpoints/ directory."
    )
    extractor: Literal["random", "pretrained"] = Field(
        default="random",
        description="Feature embedder for the Frechet distance.",
    )
    extractor_path: Optional[FilePath] = Field(
        default=None,
        description="TorchScript embedder mapping (N, C, H, W) images in [-1, 1] to (N, d) features.",
    )
    feature_dim: int = Field(default=64, ge=2, description="Random embedder feature size.")
    extractor_seed: int = Field(default=0, ge=0)
    batch_size: int = Field(default=32, ge=1)
    device: Optional[str] = None

    @model_validator(mode="after")
    def validate_extractor(self) -> Self:
        if self.extractor == "pretrained" and self.extractor_path is None:
            raise ValueError("extractor_path is required for the pretrained extractor")
        return self


class SelectionRow(BaseModel):
    checkpoint: Path
    iteration: int
    fid: Optional[float] = None
    selected: bool = False
    error: Optional[str] = None


class ScoreReduction(str, Enum):
    mean = "mean"
    max = "max"


class ThresholdRule(str, Enum):
    f1 = "f1"
    youden = "youden"


class EvalConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    data_root: Path = Field(description="Dataset tree root with labeled val and test splits.")
    checkpoint: FilePath = Field(description="Checkpoint to evaluate.")
    score_reduction: ScoreReduction = Field(
        default=ScoreReduction.mean,
        description="Reduction of a difference map to its anomaly score.",
    )
    threshold_rule: ThresholdRule = Field(
        default=ThresholdRule.f1,
        description="Rule choosing the score threshold on the validation split.",
    )
    pixel_threshold: Optional[float] = Field(
        default=None,
        ge=0.0,
        le=2.0,
        description="Difference map threshold for localization Dice. Chosen on validation when unset.",
    )
    save_maps: bool = Field(
        default=False, description="Write difference map heatmaps for test samples."
    )
    batch_size: int = Field(default=32, ge=1)
    device: Optional[str] = None


class ScoreConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    checkpoint: FilePath
    image: FilePath
    heatmap: Optional[Path] = Field(
        default=None, description="Write the difference map heatmap PNG here."
    )
    score_reduction: ScoreReduction = ScoreReduction.mean
    device: Optional[str] = None


class SampleScore(BaseModel):
    path: Path
    label: SampleLabel
    score: float
    dice: Optional[float] = None


class EvalReport(ArtifactModel):
    """Detection metrics on the test split at the threshold chosen on validation."""

    auc: float = Field(ge=0.0, le=1.0)
    precision: float = Field(ge=0.0, le=1.0)
    recall: float = Field(ge=0.0, le=1.0)
    specificity: float = Field(ge=0.0, le=1.0)
    f1: float = Field(ge=0.0, le=1.0)
    threshold: float
    n_pos: int = Field(gt=0)
    n_neg: int = Field(gt=0)
    threshold_rule: ThresholdRule = ThresholdRule.f1
    score_reduction: ScoreReduction = ScoreReduction.mean
    degenerate_threshold: bool = Field(
        default=False,
        description="Validation scores offered no threshold candidate between distinct values.",
    )
    undefined_metrics: List[str] = Field(
        default_factory=list,
        description="Metrics whose ratio had a zero denominator and are reported as 0.",
    )
    val_auc: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    pixel_threshold: Optional[float] = None
    mean_dice: Optional[float] = Field(
        default=None,
        ge=0.0,
        le=1.0,
        description="Mean localization Dice over true positive test samples with a ground truth mask.",
    )
    n_dice: int = 0
    checkpoint: Optional[Path] = None
    scores: List[SampleScore] = Field(default_factory=list)

    @model_validator(mode="after")
    def validate_f1(self) -> Self:
        if "precision" in self.undefined_metrics or "recall" in self.undefined_metrics:
            return self
        denominator = self.precision + self.recall
        expected = 0.0 if denominator == 0 else 2 * self.precision * self.recall / denominator
        if abs(expected - self.f1) > 1e-9:
            raise ValueError(
                f"f1 ({self.f1}) is not the harmonic mean of precision ({self.precision}) and recall ({self.recall})"
            )
        return self
