"""
Error types.

Every error subclasses the builtin it refines, so callers catching
ValueError or RuntimeError keep working.
"""


class GFError(Exception):
    """Base class for all toolkit errors."""


class DomainError(GFError, ValueError):
    """Argument outside the domain of definition."""


class ConfigError(GFError, ValueError):
    """Invalid run configuration or weight constraint."""


class StabilityError(GFError, ValueError):
    """Time step violates dt * max(B + lambda) <= bound."""


class GridKernelMismatch(GFError, ValueError):
    """Kernel requires a grid layout the given grid does not have."""


class ConvergenceError(GFError, RuntimeError):
    """An iteration reached its cap without meeting the tolerance."""


class PerronPositivityError(GFError, RuntimeError):
    """Eigenvector has a negative component above tolerance."""


class CertificateError(GFError, RuntimeError):
    """A drift, small-set or Harris certificate cannot be built."""


class EmptyIntervalError(CertificateError):
    """No interval carries a positive lower bound."""


class GateFailure(GFError):
    """A pipeline gate did not pass."""


class PositivityError(GFError, RuntimeError):
    """A step mapped a nonnegative measure to a negative cell mass."""
