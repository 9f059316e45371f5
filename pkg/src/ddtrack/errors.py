"""Exception types and process exit codes shared across the toolkit."""

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FORMAT = 3
EXIT_DIVERGENCE = 4


class DdtrackError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ConfigError(DdtrackError):
    """Invalid, inconsistent, or incomplete configuration."""

    exit_code = EXIT_CONFIG


class InvalidLayoutError(ConfigError):
    """Anchor layout is empty, non-finite, or contains duplicate positions."""


class FormatError(DdtrackError):
    """Malformed or unsupported on-disk data."""

    exit_code = EXIT_FORMAT


class SingularGeometryError(DdtrackError):
    """Agent position coincides with an anchor, so responses are undefined."""


class FilterDivergenceError(DdtrackError):
    """Posterior mass vanished: every particle received log-weight -inf."""

    exit_code = EXIT_DIVERGENCE

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class FilterDegeneracyError(DdtrackError):
    """Ensemble covariance could not be factorized even with jitter."""

    exit_code = EXIT_DIVERGENCE


class MetricError(DdtrackError):
    """Requested metric is undefined for the given inputs."""
