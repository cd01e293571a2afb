"""
Exception hierarchy for multistream-detect.

Input problems derive from ``ConfigurationError`` (also a ``ValueError``);
numerical failures derive from ``NumericalError`` (also an ``ArithmeticError``).
The CLI maps the first family to exit code 2 and the second to exit code 3.
"""

from typing import Iterable, List, Optional


class DetectionError(Exception):
    """Root of all package errors."""


class ConfigurationError(DetectionError, ValueError):
    """Invalid user input: matrices, grids, configs, flags."""

    def __init__(self, message: str, problems: Optional[Iterable[str]] = None):
        self.problems: List[str] = list(problems or [])
        if self.problems:
            message = message + ":\n" + "\n".join(f"  - {p}" for p in self.problems)
        super().__init__(message)


class DataIngestError(ConfigurationError):
    """Surveillance CSV or capacity map could not be ingested."""


class ObservationError(ConfigurationError):
    """An observation fed to the detector is malformed or non-finite."""


class NumericalError(DetectionError, ArithmeticError):
    """A computation left the range where its result is meaningful."""


class ModelDomainError(NumericalError):
    """A model density was evaluated outside its support."""

    def __init__(self, message: str, stream: Optional[int] = None):
        self.stream = stream
        if stream is not None:
            message = f"stream {stream}: {message}"
        super().__init__(message)

    def with_stream(self, stream: int) -> "ModelDomainError":
        """Return a copy of this error tagged with a 1-based stream index."""
        return ModelDomainError(str(self), stream=stream)


class EstimationError(NumericalError):
    """A Monte Carlo estimator has no defined value for the given records."""
