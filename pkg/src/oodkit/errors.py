"""Exception hierarchy shared across the toolkit.

The split mirrors the CLI exit codes: configuration problems (2), data and
format problems (3), numerical failures (4).
"""


class OodkitError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ConfigError(OodkitError):
    """Invalid or inconsistent run configuration / CLI arguments."""

    exit_code = 2


class DataError(OodkitError):
    """Malformed files, violated invariants, or mismatched inputs."""

    exit_code = 3


class NumericalError(OodkitError):
    """A numerical procedure failed beyond recovery (e.g. factorization)."""

    exit_code = 4
