"""Exception types shared across the package."""


class EPMGPError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(EPMGPError, ValueError):
    """Invalid user input.  ``field`` names the offending field."""

    def __init__(self, field: str, message: str):
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}")


class NotPositiveDefinite(EPMGPError, ArithmeticError):
    """Cholesky factorization failed even after one jitter retry."""


class TailUnderflow(EPMGPError, ArithmeticError):
    """A truncated mass is below 1e-300 even in the log-domain path."""


class NegativeCavityVariance(EPMGPError, ArithmeticError):
    """Removing a site left a non-positive cavity precision."""


class NonFinite(EPMGPError, ArithmeticError):
    """A log-partition term came out NaN or infinite."""


class NotConverged(EPMGPError):
    """EP stopped at the sweep limit or on detected oscillation."""


class NotReducible(EPMGPError):
    """The region cannot be reduced to a rectangle probability."""


class Unsupported(EPMGPError):
    """Requested case lies outside what an oracle can compute."""
