"""Exception types shared across the package.

Each error maps to a CLI exit code (see cli.py): configuration problems
exit 2, numerical-tolerance failures exit 3, precompensation range
violations exit 4.
"""


class StarkShaperError(Exception):
    """Base class for all package errors."""


class ConfigError(StarkShaperError):
    """Invalid or inconsistent run configuration."""

    exit_code = 2


class QuadratureError(StarkShaperError):
    """A quadrature or root-finding routine failed to reach tolerance."""

    exit_code = 3


class PrecompensationRangeError(StarkShaperError):
    """Requested pattern amplitude exceeds the invertible mirror stroke."""

    exit_code = 4
