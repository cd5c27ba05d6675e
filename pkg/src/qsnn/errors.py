"""Exception hierarchy shared by every qsnn module."""

from __future__ import annotations


class QSNNError(Exception):
    """Base class for all errors raised by qsnn."""


class IntegrationFault(QSNNError):
    """A state became non-finite during integration."""

    def __init__(self, message: str, t: float | None = None):
        super().__init__(message if t is None else f"{message} (t={t!r})")
        self.t = t


class SingularCoefficientError(QSNNError):
    pass


class EmptyInputError(QSNNError, ValueError):
    pass


class InsufficientDataError(QSNNError, ValueError):
    pass


class ShapeError(QSNNError, ValueError):
    pass


class StepSizeError(QSNNError):
    """Trace drift within one step exceeded tolerance; use a smaller dt."""

    def __init__(self, message: str, t: float, drift: float):
        super().__init__(message)
        self.t = t
        self.drift = drift


class InsufficientHistoryError(QSNNError, ValueError):
    pass


class UndefinedNormalizationError(QSNNError):
    """Raised when a correlation cannot be normalized; ``raw`` keeps the values."""

    def __init__(self, message: str, raw=None):
        super().__init__(message)
        self.raw = raw


class NoDecayError(QSNNError):
    pass


class InsufficientPeaksError(QSNNError, ValueError):
    pass


class UndefinedCorrelationError(QSNNError, ValueError):
    pass


class SamplingError(QSNNError, ValueError):
    pass


class ConfigError(QSNNError):
    """Base for configuration problems; ``path`` names the offending field."""

    def __init__(self, message: str, path: str | None = None):
        super().__init__(message)
        self.path = path


class ConfigFileNotFound(ConfigError):
    pass


class ConfigSyntaxError(ConfigError):
    pass


class ConfigValidationError(ConfigError):
    pass


class PacketIOError(QSNNError, OSError):
    pass


class StageError(QSNNError):
    """A pipeline stage failed; ``stage`` names it and ``manifest`` is the written manifest path."""

    def __init__(self, stage: str, cause: BaseException, manifest=None):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.manifest = manifest
