"""
Alternating critic/generator optimization.

Every iteration performs one critic update on fresh batches. On the last iteration of each group of
`critic_steps_per_gen_step`, the generator also updates, on its own fresh batches. Both optimizers use
the scheduled learning rate of the iteration.

Training reads only trainA and trainB. Validation and test splits are never opened.
"""

import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, List, Optional

import torch
from tqdm import tqdm

from healthy_translate.datamodel import SampleRecord, Split, TrainConfig
from healthy_translate.datasets.images import ImageCache
from healthy_translate.datasets.sampling import UnpairedBatch, load_batch, unpaired_loader
from healthy_translate.datasets.splits import load_split
from healthy_translate.errors import NonFiniteLossError
from healthy_translate.losses import LossBreakdown, critic_loss, generator_loss
from healthy_translate.trainer.loss_log import LossLog
from healthy_translate.trainer.samples import save_sample_grid
from healthy_translate.trainer.schedule import is_generator_step, learning_rate
from healthy_translate.trainer.state import (
    TrainState,
    checkpoint_archive,
    load_checkpoint,
    new_train_state,
    save_checkpoint,
    write_archive,
)
from healthy_translate.utils.device import resolve_device

logger = logging.getLogger(__name__)

N_SAMPLE_IMAGES = 4
LOSS_LOG_FILENAME = "losses.csv"


def checkpoint_filename(iteration: int) -> str:
    return f"iter_{iteration:08d}.pt"


@dataclass
class TrainingResult:
    final_checkpoint: Path
    checkpoints: List[Path] = field(default_factory=list)
    loss_log: Optional[Path] = None


def _set_lr(optimizer: torch.optim.Optimizer, lr: float) -> None:
    for group in optimizer.param_groups:
        group["lr"] = lr


def _check_gradients(module: torch.nn.Module, what: str) -> None:
    for name, p in module.named_parameters():
        if p.grad is not None and not torch.isfinite(p.grad).all():
            raise NonFiniteLossError(f"{what} gradient of {name} is not finite")


def _next_batch(state: TrainState, batches: Iterator[UnpairedBatch]) -> UnpairedBatch:
    batch_a, batch_b = next(batches)
    state.batches_drawn += 1
    return batch_a.to(state.device), batch_b.to(state.device)


def _critic_step(state: TrainState, batches: Iterator[UnpairedBatch]) -> LossBreakdown:
    batch_a, batch_b = _next_batch(state, batches)
    state.opt_d.zero_grad(set_to_none=True)
    parts = critic_loss(
        state.critic,
        state.generator,
        batch_a,
        batch_b,
        state.config.weights,
        state.torch_rng,
    )
    parts.total_d.backward()  # type: ignore[union-attr]
    _check_gradients(state.critic, "Critic")
    state.opt_d.step()
    return parts


def _generator_step(state: TrainState, batches: Iterator[UnpairedBatch]) -> LossBreakdown:
    batch_a, batch_b = _next_batch(state, batches)
    state.opt_g.zero_grad(set_to_none=True)
    state.critic.requires_grad_(False)
    try:
        parts = generator_loss(
            state.critic,
            state.generator,
            batch_a,
            batch_b,
            state.config.weights,
            adv_on_healthy=state.config.adv_on_healthy,
        )
        parts.total_g.backward()  # type: ignore[union-attr]
    finally:
        state.critic.requires_grad_(True)
    _check_gradients(state.generator, "Generator")
    state.opt_g.step()
    return parts


def train_iteration(state: TrainState, batches: Iterator[UnpairedBatch]) -> LossBreakdown:
    """Run iteration `state.iteration` and advance it by one. Returns the iteration's losses.

    Raises NonFiniteLossError, tagged with the iteration, before any update that would apply a
    non-finite gradient.
    """
    cfg = state.config
    iteration = state.iteration
    lr = learning_rate(iteration, cfg)
    _set_lr(state.opt_d, lr)
    _set_lr(state.opt_g, lr)
    try:
        parts = _critic_step(state, batches)
        if is_generator_step(iteration, cfg.critic_steps_per_gen_step):
            parts = parts.merge(_generator_step(state, batches))
    except NonFiniteLossError as e:
        raise NonFiniteLossError(str(e), iteration=iteration) from e
    state.iteration = iteration + 1
    return parts


def _fixed_sample_batch(
    cfg: TrainConfig, set_a: List[SampleRecord], cache: ImageCache, device: torch.device
) -> torch.Tensor:
    records = set_a[:N_SAMPLE_IMAGES]
    return load_batch(records, cfg.channels, cfg.image_size, cache).to(device)


def run_training(
    cfg: TrainConfig,
    run_dir: Path | str,
    show_progress: Optional[bool] = None,
) -> TrainingResult:
    """Train to `cfg.total_iterations`, writing into `run_dir`:

    - `checkpoints/iter_XXXXXXXX.pt` every `checkpoint_every` iterations and at the end
    - `losses.csv`, one row per iteration
    - `samples/iter_XXXXXXXX.png` every `sample_every` iterations, when enabled
    - `nonfinite_iter_XXXXXXXX.pt` if a loss or gradient turns non-finite, holding the state at the
      start of the failing iteration
    """
    run_dir = Path(run_dir)
    checkpoints_dir = run_dir / "checkpoints"
    samples_dir = run_dir / "samples"
    checkpoints_dir.mkdir(parents=True, exist_ok=True)

    device = resolve_device(cfg.device)
    set_a = load_split(cfg.data_root, Split.train_a)
    set_b = load_split(cfg.data_root, Split.train_b)
    logger.info(
        "Training on %d set A and %d set B images from %s (device %s)",
        len(set_a),
        len(set_b),
        cfg.data_root,
        device,
    )

    if cfg.resume_from is not None:
        state = load_checkpoint(cfg.resume_from, cfg, device)
        logger.info("Resumed from %s at iteration %d", cfg.resume_from, state.iteration)
    else:
        state = new_train_state(cfg, device)
    if state.iteration > cfg.total_iterations:
        raise ValueError(
            f"Checkpoint iteration {state.iteration} is past total_iterations ({cfg.total_iterations})"
        )

    cache = ImageCache()
    loader = unpaired_loader(
        set_a,
        set_b,
        cfg.batch_size,
        cfg.seed,
        start=state.batches_drawn,
        channels=cfg.channels,
        image_size=cfg.image_size,
        num_workers=1 if cfg.prefetch else 0,
        cache=cache,
    )
    batches = iter(loader)
    sample_batch = _fixed_sample_batch(cfg, set_a, cache, device) if cfg.sample_every else None

    if show_progress is None:
        show_progress = sys.stderr.isatty()

    checkpoints: List[Path] = []
    loss_log_path = run_dir / LOSS_LOG_FILENAME
    with LossLog(loss_log_path) as loss_log:
        progress = tqdm(
            total=cfg.total_iterations,
            initial=state.iteration,
            disable=not show_progress,
            desc="train",
        )
        while state.iteration < cfg.total_iterations:
            iteration = state.iteration
            lr = learning_rate(iteration, cfg)
            before = checkpoint_archive(state, copy_tensors=True)
            try:
                parts = train_iteration(state, batches)
            except NonFiniteLossError as e:
                snapshot = write_archive(
                    before, run_dir / f"nonfinite_{checkpoint_filename(iteration)}"
                )
                logger.error(
                    "Non-finite loss at iteration %d, state saved to %s", iteration, snapshot
                )
                raise NonFiniteLossError(
                    str(e), iteration=iteration, snapshot_path=snapshot
                ) from e
            loss_log.append(iteration, parts, lr)
            progress.update(1)

            done = state.iteration
            if done % cfg.log_every == 0:
                values = parts.as_floats()
                logger.info(
                    "iter %d lr %.3g adv_d %.4f gp %.4f adv_g %s rec %s",
                    done,
                    lr,
                    values["adv_d"],
                    values["gp"],
                    values["adv_g"],
                    values["reconstruction"],
                )
            if sample_batch is not None and done % cfg.sample_every == 0:
                save_sample_grid(
                    state.generator, sample_batch, samples_dir / f"iter_{done:08d}.png"
                )
            if done % cfg.checkpoint_every == 0 or done == cfg.total_iterations:
                path = save_checkpoint(state, checkpoints_dir / checkpoint_filename(done))
                checkpoints.append(path)
        progress.close()

    final = checkpoints_dir / checkpoint_filename(state.iteration)
    if not final.exists():
        final = save_checkpoint(state, final)
        checkpoints.append(final)

    logger.info("Training finished at iteration %d, final checkpoint %s", state.iteration, final)
    return TrainingResult(final_checkpoint=final, checkpoints=checkpoints, loss_log=loss_log_path)
