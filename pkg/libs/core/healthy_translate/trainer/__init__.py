from healthy_translate.trainer.loop import (
    TrainingResult,
    checkpoint_filename,
    run_training,
    train_iteration,
)
from healthy_translate.trainer.loss_log import LOSS_LOG_COLUMNS, LossLog, read_loss_log
from healthy_translate.trainer.samples import save_sample_grid
from healthy_translate.trainer.schedule import is_generator_step, learning_rate
from healthy_translate.trainer.state import (
    TrainState,
    load_checkpoint,
    load_generator,
    new_train_state,
    save_checkpoint,
)

__all__ = [
    "LOSS_LOG_COLUMNS",
    "LossLog",
    "TrainState",
    "TrainingResult",
    "checkpoint_filename",
    "is_generator_step",
    "learning_rate",
    "load_checkpoint",
    "load_generator",
    "new_train_state",
    "read_loss_log",
    "run_training",
    "save_checkpoint",
    "save_sample_grid",
    "train_iteration",
]
