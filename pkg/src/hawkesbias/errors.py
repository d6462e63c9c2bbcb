"""Exception types shared across the package."""


class HawkesError(Exception):
    """Base class for all package errors."""


class ParameterDomainError(HawkesError, ValueError):
    """Kernel or model parameters outside their admissible set."""


class DomainError(HawkesError, ValueError):
    """Function argument outside the domain of the operation."""


class InsufficientDataError(HawkesError, ValueError):
    pass


class DegenerateProfileError(HawkesError, ValueError):
    pass


class NonpositiveIntensityError(DomainError):
    def __init__(self, index, value):
        super().__init__(f"conditional intensity {value!r} <= 0 at event index {index}")
        self.index = index
        self.value = value


class TruncationError(HawkesError, RuntimeError):
    """Simulation stopped at the event cap; ``partial`` holds the events generated so far."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class FitFailureError(HawkesError, RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or []
