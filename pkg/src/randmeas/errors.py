"""Exception hierarchy shared across the package.

Each error class maps to a distinct CLI exit code, so estimator and I/O
failures stay distinguishable in scripted pipelines.
"""


class RandmeasError(Exception):
    """Base class for all package errors."""


class ConfigError(RandmeasError):
    """Invalid configuration, parameters, or usage (exit code 2)."""


class SizeCapError(RandmeasError):
    """A size cap was exceeded; caps fail loudly instead of truncating (exit code 3)."""


class DatasetIOError(RandmeasError):
    """File-level problem: unreadable, truncated, or not valid JSON lines (exit code 4)."""


class SchemaVersionError(DatasetIOError):
    """Dataset or result schema version is not supported (exit code 4)."""


class InvariantViolationError(DatasetIOError):
    """File parsed but violates a structural invariant of the format (exit code 4)."""


class ProtocolViolationError(RandmeasError):
    """Two-dataset protocol preconditions not met, e.g. mismatched seeds (exit code 5)."""


class NoCompatibleSettingsError(RandmeasError):
    """No measurement setting is compatible with the requested Pauli.

    Carries the compatibility count (always 0 here) and the total number of
    settings inspected so callers can report effective sample sizes.
    """

    def __init__(self, pauli: str, n_settings: int):
        self.pauli = pauli
        self.n_compatible = 0
        self.n_settings = n_settings
        super().__init__(
            f"no compatible settings for {pauli} among {n_settings} settings"
        )
