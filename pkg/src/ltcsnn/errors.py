"""Exception types raised across the package."""


class LtcError(Exception):
    """Base class for all package errors."""


class DomainError(LtcError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class WindowMismatchError(LtcError, ValueError):
    """A spike train's window length does not match the exponent range."""


class FixedPointOverflowError(LtcError, OverflowError):
    """A fixed-point value left the 64-bit signed range."""

    def __init__(self, message, neuron=None, time_step=None):
        super().__init__(message)
        self.neuron = neuron
        self.time_step = time_step


class NonRepresentableError(LtcError, ValueError):
    """A real value cannot be represented exactly in fixed point."""


class ShapeMismatchError(LtcError, ValueError):
    pass


class ConversionError(LtcError, ValueError):
    pass


class ConfigError(LtcError, ValueError):
    pass


class NormalizationError(LtcError, ValueError):
    pass


class TrainingDivergedError(LtcError, RuntimeError):
    pass


class IdxFormatError(LtcError, ValueError):
    pass
