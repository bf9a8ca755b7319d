"""Exception types raised across the package."""


class BaitcheckError(Exception):
    """Base class for all package errors."""


class DatasetError(BaitcheckError):
    """A dataset file could not be turned into records."""


class EmptyDatasetError(DatasetError):
    pass


class InvalidLabelError(BaitcheckError, ValueError):
    pass


class DegenerateClassError(BaitcheckError, ValueError):
    """A class has too few samples for the requested operation."""


class ShapeError(BaitcheckError, ValueError):
    pass


class AlignmentError(ShapeError):
    pass


class ConfigError(BaitcheckError, ValueError):
    pass


class InsufficientDataError(BaitcheckError, ValueError):
    pass


class NotFittedError(BaitcheckError, RuntimeError):
    pass


class DivergenceError(BaitcheckError, FloatingPointError):
    """Training produced a non-finite loss."""

    def __init__(self, step, loss=float("nan")):
        super().__init__(f"non-finite loss {loss!r} at step {step}")
        self.step = step
        self.loss = loss


class CheckpointError(BaitcheckError):
    """A checkpoint is corrupt or does not match its config."""


class IngestionError(BaitcheckError):
    """A precomputed embedding file is missing a requested row or is malformed."""
