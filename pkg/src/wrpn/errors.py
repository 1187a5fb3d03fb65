"""Exception hierarchy shared by every wrpn module."""


class WRPNError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(WRPNError, ValueError):
    """Tensor shapes do not line up."""


class ConfigurationError(WRPNError, ValueError):
    """A descriptor, config or argument is not usable as given."""


class InputError(WRPNError, ValueError):
    """Data values (labels, pixels) are outside their legal domain."""


class ParseError(WRPNError, ValueError):
    """A file could not be decoded.

    ``offset`` is the byte position at which decoding gave up, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class IncompatibleCheckpointError(WRPNError):
    """Checkpoint was written for a different network descriptor."""


class InvariantViolation(WRPNError, AssertionError):
    """An internal invariant failed; indicates a bug, not bad input."""


class UsageError(WRPNError, RuntimeError):
    """API called out of order (e.g. backward without a forward record)."""


class TrainingDivergedError(WRPNError, RuntimeError):
    """Loss became non-finite during training."""
