"""
Training state and the checkpoint archive.

A checkpoint is one `torch.save` file holding a JSON-compatible header, the generator and critic
weights, both Adam states, the number of training batches drawn so far, the torch generator state
used for gradient penalty interpolation, and the resolved training config. Loading uses
`weights_only=True`, so archives never execute code.
"""

import copy
import logging
import pickle
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import torch
from pydantic import ValidationError

from healthy_translate.datamodel import CheckpointHeader, TrainConfig
from healthy_translate.errors import CheckpointError
from healthy_translate.networks.models import (
    Critic,
    Generator,
    init_critic,
    init_generator,
)

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
ARCHIVE_KEYS = (
    "header",
    "generator",
    "critic",
    "opt_g",
    "opt_d",
    "batches_drawn",
    "torch_rng",
    "config",
)


@dataclass
class TrainState:
    """Everything a training run owns. `iteration` counts completed iterations."""

    config: TrainConfig
    generator: Generator
    critic: Critic
    opt_g: torch.optim.Adam
    opt_d: torch.optim.Adam
    torch_rng: torch.Generator
    iteration: int = 0
    batches_drawn: int = 0
    device: torch.device = field(default_factory=lambda: torch.device("cpu"))

    def header(self) -> CheckpointHeader:
        return CheckpointHeader(
            version=CHECKPOINT_VERSION,
            channels=self.config.channels,
            image_size=self.config.image_size,
            width_scale=self.config.width_scale,
            iteration=self.iteration,
        )


def _optimizers(
    generator: Generator, critic: Critic, cfg: TrainConfig
) -> Tuple[torch.optim.Adam, torch.optim.Adam]:
    opt_g = torch.optim.Adam(generator.parameters(), lr=cfg.base_lr, betas=cfg.betas)
    opt_d = torch.optim.Adam(critic.parameters(), lr=cfg.base_lr, betas=cfg.betas)
    return opt_g, opt_d


def new_train_state(cfg: TrainConfig, device: Optional[torch.device] = None) -> TrainState:
    """Fresh networks and optimizers, every random stream derived from cfg.seed."""
    device = device or torch.device("cpu")
    generator = init_generator(cfg.channels, seed=cfg.seed, width_scale=cfg.width_scale)
    critic = init_critic(
        cfg.channels, cfg.image_size, seed=cfg.seed + 1, width_scale=cfg.width_scale
    )
    generator.to(device)
    critic.to(device)
    opt_g, opt_d = _optimizers(generator, critic, cfg)
    return TrainState(
        config=cfg,
        generator=generator,
        critic=critic,
        opt_g=opt_g,
        opt_d=opt_d,
        torch_rng=torch.Generator().manual_seed(cfg.seed + 2),
        iteration=0,
        device=device,
    )


def _stored_config(cfg: TrainConfig) -> Dict[str, Any]:
    # resume_from is a run input, not part of the trained model
    return cfg.model_copy(update={"resume_from": None}).model_dump(mode="json")


def checkpoint_archive(state: TrainState, copy_tensors: bool = False) -> Dict[str, Any]:
    """The archive of `state` as it is now. With `copy_tensors`, later updates to the networks and
    optimizers do not show through."""
    archive = {
        "header": state.header().model_dump(),
        "generator": state.generator.state_dict(),
        "critic": state.critic.state_dict(),
        "opt_g": state.opt_g.state_dict(),
        "opt_d": state.opt_d.state_dict(),
        "batches_drawn": state.batches_drawn,
        "torch_rng": state.torch_rng.get_state(),
        "config": _stored_config(state.config),
    }
    if copy_tensors:
        for key in ("generator", "critic", "opt_g", "opt_d"):
            archive[key] = copy.deepcopy(archive[key])
    return archive


def write_archive(archive: Dict[str, Any], path: Path | str) -> Path:
    """Write an archive atomically."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = path.with_name(path.name + ".tmp")
    torch.save(archive, tmp_path)
    tmp_path.replace(path)
    logger.debug("Saved checkpoint %s at iteration %d", path, archive["header"]["iteration"])
    return path


def save_checkpoint(state: TrainState, path: Path | str) -> Path:
    return write_archive(checkpoint_archive(state), path)


def _read_archive(path: Path | str) -> Dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"Cannot load checkpoint because {path} does not exist")
    try:
        archive = torch.load(path, map_location="cpu", weights_only=True)
    except (RuntimeError, EOFError, pickle.UnpicklingError, zipfile.BadZipFile) as e:
        raise CheckpointError(f"Cannot load checkpoint because {path} is corrupt: {e}") from e
    if not isinstance(archive, dict):
        raise CheckpointError(f"Cannot load checkpoint because {path} is not a checkpoint archive")
    missing = [key for key in ARCHIVE_KEYS if key not in archive]
    if missing:
        raise CheckpointError(
            f"Cannot load checkpoint because {path} is missing {', '.join(missing)}"
        )
    return archive


def read_header(archive: Dict[str, Any], path: Path | str) -> CheckpointHeader:
    try:
        header = CheckpointHeader.model_validate(archive["header"])
    except ValidationError as e:
        raise CheckpointError(
            f"Cannot load checkpoint because the header of {path} is invalid: {e}"
        ) from e
    if header.version > CHECKPOINT_VERSION:
        raise CheckpointError(
            f"Cannot load checkpoint because its version ({header.version}) is newer than supported ({CHECKPOINT_VERSION})"
        )
    return header


def check_compatible(header: CheckpointHeader, cfg: TrainConfig) -> None:
    for name in ("channels", "image_size", "width_scale"):
        stored, requested = getattr(header, name), getattr(cfg, name)
        if stored != requested:
            raise CheckpointError(
                f"Cannot load checkpoint because it was trained with {name}={stored}, but {name}={requested} was requested"
            )


def _load_module(
    module: torch.nn.Module, weights: Dict[str, Any], what: str, path: Path | str
) -> None:
    try:
        module.load_state_dict(weights)
    except (RuntimeError, KeyError) as e:
        raise CheckpointError(
            f"Cannot load checkpoint because the {what} weights in {path} do not fit: {e}"
        ) from e


def load_checkpoint(
    path: Path | str,
    cfg: Optional[TrainConfig] = None,
    device: Optional[torch.device] = None,
) -> TrainState:
    """Restore a full training state.

    Without `cfg`, the config stored in the archive is used. With it, the archive must have been
    trained with the same channels, image size and width.
    """
    archive = _read_archive(path)
    header = read_header(archive, path)
    if cfg is None:
        try:
            cfg = TrainConfig.model_validate(archive["config"])
        except ValidationError as e:
            raise CheckpointError(
                f"Cannot load checkpoint because its stored config is invalid: {e}"
            ) from e
    check_compatible(header, cfg)

    state = new_train_state(cfg, device)
    _load_module(state.generator, archive["generator"], "generator", path)
    _load_module(state.critic, archive["critic"], "critic", path)
    try:
        state.opt_g.load_state_dict(archive["opt_g"])
        state.opt_d.load_state_dict(archive["opt_d"])
        state.torch_rng.set_state(archive["torch_rng"])
    except (ValueError, KeyError, TypeError, RuntimeError) as e:
        raise CheckpointError(
            f"Cannot load checkpoint because its optimizer or rng state is invalid: {e}"
        ) from e
    batches_drawn = archive["batches_drawn"]
    if not isinstance(batches_drawn, int) or batches_drawn < 0:
        raise CheckpointError(
            f"Cannot load checkpoint because its batch count ({batches_drawn!r}) is invalid"
        )
    state.iteration = header.iteration
    state.batches_drawn = batches_drawn
    return state


def load_generator(
    path: Path | str, device: Optional[torch.device] = None
) -> Tuple[Generator, CheckpointHeader]:
    """Generator weights only, in eval mode, for selection, evaluation and scoring."""
    archive = _read_archive(path)
    header = read_header(archive, path)
    generator = Generator(header.channels, header.width_scale)
    _load_module(generator, archive["generator"], "generator", path)
    generator.to(device or torch.device("cpu"))
    generator.eval()
    return generator, header
