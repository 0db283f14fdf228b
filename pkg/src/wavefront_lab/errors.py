"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class PreconditionError(ValueError):
    """A documented operation precondition does not hold."""


class SearchExhaustedError(RuntimeError):
    """A constant search found no admissible candidate in its range."""


class ConfigurationError(ValueError):
    """A scheme or experiment configuration is invalid."""


class WindowTooSmallError(RuntimeError):
    """The interface escaped the co-moving lattice window."""


class EstimationError(ValueError):
    """A statistical estimate cannot be formed from the given data."""


class EmptySystemError(RuntimeError):
    """An operation needed a nonempty particle system."""


class CapacityError(RuntimeError):
    """A particle system exceeded its particle cap."""

    def __init__(self, message, partial_state=None):
        super().__init__(message)
        self.partial_state = partial_state
