from healthy_translate.datamodel import TrainConfig


def learning_rate(iteration: int, cfg: TrainConfig) -> float:
    """Constant base_lr, then a linear decay over the last decay_iterations reaching 0 at total_iterations."""
    total = cfg.total_iterations
    if iteration < 0 or iteration > total:
        raise ValueError(f"iteration must be within [0, {total}], got {iteration}")
    onset = total - cfg.decay_iterations
    if iteration < onset:
        return cfg.base_lr
    if cfg.decay_iterations == 0:
        return 0.0 if iteration == total else cfg.base_lr
    return cfg.base_lr * (total - iteration) / cfg.decay_iterations


def is_generator_step(iteration: int, critic_steps_per_gen_step: int) -> bool:
    """The generator updates on the last critic step of each group."""
    return iteration % critic_steps_per_gen_step == critic_steps_per_gen_step - 1
