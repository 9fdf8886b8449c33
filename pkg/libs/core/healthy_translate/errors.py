from pathlib import Path


class DatasetError(ValueError):
    """A dataset tree, manifest or image file could not be used."""


class CheckpointError(ValueError):
    """A checkpoint archive is corrupt or incompatible with the requested model."""


class NonFiniteLossError(FloatingPointError):
    """Training produced a NaN or infinite loss or gradient.

    Carries the iteration and, when one was written, the path of the state snapshot
    taken at the start of the failing iteration, before its critic update and before it drew any
    batch or random number.
    """

    def __init__(
        self,
        message: str,
        iteration: int | None = None,
        snapshot_path: Path | None = None,
    ):
        super().__init__(message)
        self.iteration = iteration
        self.snapshot_path = snapshot_path


class FrechetDistanceError(ValueError):
    pass


class SelectionError(RuntimeError):
    pass
