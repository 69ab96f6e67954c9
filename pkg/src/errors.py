"""
Exception hierarchy for the Knowledge Eccentricity toolkit.

Every exception carries the process exit code the command-line interface
maps it to, so the CLI can turn any failure into a machine-readable record.
"""

from typing import Any, Dict


class KEToolkitError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1
    kind = "error"

    def to_record(self) -> Dict[str, Any]:
        """
        Render the error as a machine-readable record.

        Returns:
            Dict[str, Any]: Error kind, message and exit code
        """
        return {
            "error": self.kind,
            "message": str(self),
            "exit_code": self.exit_code,
        }


class UsageError(KEToolkitError):
    """Invalid invocation, malformed reference or bad configuration."""

    exit_code = 2
    kind = "usage"


class DataError(KEToolkitError):
    """Input data is missing, malformed or unusable."""

    exit_code = 3
    kind = "data"


class SchemaError(DataError):
    """A results file lacks a required column."""

    kind = "schema"


class DecodeError(DataError):
    """An API payload or cache line could not be decoded."""

    kind = "decode"


class UnknownWorkError(DataError):
    """The requested work does not exist (HTTP 404 or absent offline)."""

    kind = "unknown_work"


class StatisticsError(DataError):
    """Base class for statistical precondition failures."""

    kind = "statistics"


class InsufficientDataError(StatisticsError):
    kind = "insufficient_data"


class InsufficientVarianceError(StatisticsError):
    kind = "insufficient_variance"


class EmptyDistributionError(StatisticsError):
    kind = "empty_distribution"


class SingularDesignError(StatisticsError):
    """Design matrix is rank deficient (perfect collinearity)."""

    kind = "singular_design"


class TransportError(KEToolkitError):
    """Network failure or server error that survived all retries."""

    exit_code = 4
    kind = "transport"


class DegenerateMetricError(KEToolkitError):
    """The KE metric is undefined for the given input."""

    exit_code = 5
    kind = "degenerate_metric"


class DegenerateNeighborhoodError(DegenerateMetricError):
    """Fewer than two references; works like this are excluded from analysis."""

    kind = "degenerate_neighborhood"


class UndefinedMetricError(DegenerateMetricError):
    kind = "undefined_metric"


class InvalidLinkCountError(DegenerateMetricError):
    kind = "invalid_link_count"
