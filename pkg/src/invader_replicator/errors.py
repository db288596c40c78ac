"""Exception hierarchy shared by every module."""


class ReplicatorError(Exception):
    """Base class for all library errors."""


class ValidationError(ReplicatorError, ValueError):
    """Malformed input: wrong shape, non-finite values, off-simplex states."""


class PreconditionError(ValidationError):
    """Input is well-formed but outside the domain an operation supports."""


class DegenerateThresholdError(ReplicatorError):
    """A trait sits exactly on a selection threshold (within tolerance)."""


class IntegrationError(ReplicatorError):
    """The ODE integrator left the simplex or otherwise failed."""


class NumericalError(ReplicatorError):
    """A numerical routine (eigensolver, regression) failed."""
