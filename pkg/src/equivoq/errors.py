"""Exception types shared across the package."""


class EquivoqError(Exception):
    """Base class for every error raised by this package."""


class ArgumentError(EquivoqError, ValueError):
    """Malformed input: bad axis, dimension mismatch, invalid distribution."""


class InfeasibleError(EquivoqError):
    """The constraint set of a problem instance is empty."""


class ConvergenceError(EquivoqError):
    """An iterative method ran out of iterations before meeting its tolerance.

    The last iterate is kept on ``last`` so callers can still inspect it.
    """

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class ResourceError(EquivoqError):
    """A requested enumeration exceeds the configured size limit."""

    def __init__(self, message, count=None):
        super().__init__(message)
        self.count = count
