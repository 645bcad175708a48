"""Exception hierarchy shared by the toolkit and the CLI exit-code mapping."""

from __future__ import annotations


class LSCError(Exception):
    """Base class for every error raised by lsconf."""

    exit_code = 1


class ParseError(LSCError):
    exit_code = 2


class ConfigurationError(LSCError):
    exit_code = 3


class InvalidRankError(ConfigurationError):
    pass


class InvalidStateError(ConfigurationError):
    pass


class InvalidInputError(ConfigurationError):
    pass


class UnsupportedLevelError(ConfigurationError):
    pass


class InvalidArchitectureError(ConfigurationError):
    pass


class ShapeError(ConfigurationError):
    pass


class InconsistentProvenanceError(ConfigurationError):
    pass


class InvalidKError(ConfigurationError):
    pass


class DegenerateInputError(ConfigurationError):
    """A zero vector reached a cosine operation."""


class LabelRangeError(ConfigurationError):
    def __init__(self, index: int, label: int, n_classes: int):
        super().__init__(
            f"label {label} at position {index} is outside [0, {n_classes})"
        )
        self.index = index
        self.label = label
        self.n_classes = n_classes


class EmptyInputError(ConfigurationError):
    pass


class MissingClassError(ConfigurationError):
    def __init__(self, cls: int):
        super().__init__(f"class {cls} has no samples")
        self.cls = cls


class DivergenceError(LSCError):
    """Training produced a non-finite loss.

    ``state`` holds the training state as of the last finite epoch.
    """

    exit_code = 4

    def __init__(self, epoch: int, state=None):
        super().__init__(f"non-finite loss in epoch {epoch}")
        self.epoch = epoch
        self.state = state


class CapacityError(LSCError):
    """Not enough center vectors for the requested number of classes."""

    exit_code = 5

    def __init__(self, requested: int, available: int, suggestion: int | None = None):
        msg = f"requested {requested} classes but only {available} vectors are available"
        if suggestion is not None:
            msg += f"; use rank n={suggestion}"
        super().__init__(msg)
        self.requested = requested
        self.available = available
        self.suggestion = suggestion


# alternate name for the choose_centers failure
InsufficientVectorsError = CapacityError


class CenterDriftError(LSCError):
    """Extended centers do not reproduce the previous center rows exactly."""

    exit_code = 6
