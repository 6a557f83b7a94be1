"""Exception types shared across the package.

Every error raised on purpose derives from EngineError so callers can
distinguish "our" failures from genuine bugs.
"""


class EngineError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(EngineError):
    """Tensor shape is invalid or incompatible with an operation."""


class ParameterError(EngineError):
    """A numeric argument is outside its valid range."""


class IndexRangeError(EngineError):
    """A row/element index falls outside the addressed axis."""


class LabelError(EngineError):
    """A class label falls outside [0, class_count)."""


class ContractError(EngineError):
    """A caller violated an operation's contract (wrong root shape, bad k, ...)."""


class DataFormatError(EngineError):
    """A binary payload does not match its declared container format."""


class DataLengthError(EngineError):
    """A binary payload is truncated or has an impossible length."""


class DataConsistencyError(EngineError):
    """Two related payloads disagree (e.g. image count vs label count)."""


class ConfigError(EngineError):
    """An experiment config failed to parse or validate."""
