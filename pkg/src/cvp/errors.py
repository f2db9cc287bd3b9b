"""Exception types shared across the package.

The CLI maps these onto process exit codes: configuration problems exit 2,
numerical failures exit 3, resource caps exit 4.
"""


class CVPError(Exception):
    """Base class for package errors."""


class ConfigError(CVPError, ValueError):
    """Invalid user input or configuration."""


class DomainError(CVPError, ValueError):
    """A vector lies outside the domain of a spectral function."""


class NumericalError(CVPError, ArithmeticError):
    """A numerical step failed (indefinite Gram form, empty solve, ...)."""


class IndefiniteGramError(NumericalError):
    """Cholesky factorisation of the Gram form failed."""


class ResourceLimitError(CVPError, MemoryError):
    """A dense object would exceed the configured size cap."""
