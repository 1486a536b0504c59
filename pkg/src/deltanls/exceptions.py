"""Exception hierarchy shared across the package."""


class DeltaNLSError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(DeltaNLSError, ValueError):
    """An argument violates an operation's preconditions."""


class UnsupportedRegimeError(DeltaNLSError, ValueError):
    """The nonlinearity power is outside the supercritical range p > 3."""


class NotApplicableError(DeltaNLSError, ValueError):
    """A quantity is undefined for the given input (e.g. a violated hypothesis)."""


class StepFailure(DeltaNLSError, RuntimeError):
    """A time step could not be completed (inner solver did not converge)."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class PropagationError(DeltaNLSError, RuntimeError):
    """Evolution failed while probing or simulating."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class InternalError(DeltaNLSError, AssertionError):
    """A construction invariant was violated (a bug, not a user error)."""
