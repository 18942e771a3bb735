"""Error hierarchy shared by the library and the CLI.

Every error carries the exit code the CLI reports for its category:
2 for configuration, 3 for data, 4 for numerical failures.
"""

from __future__ import annotations

from typing import Optional


class PgpRiskError(Exception):
    exit_code = 1

    def __init__(self, message: str, details: Optional[list[str]] = None):
        super().__init__(message)
        self.details = list(details or [])

    def __reduce__(self):
        # Worker processes send errors back pickled; keep the details.
        return (type(self), (str(self), self.details))

    def to_body(self) -> dict:
        return {
            "error": type(self).__name__,
            "message": str(self),
            "details": self.details,
        }


class ConfigError(PgpRiskError):
    exit_code = 2


class DataError(PgpRiskError):
    exit_code = 3


class MalformedRow(DataError):
    pass


class NonPositivePrice(DataError):
    pass


class DuplicateTimestamp(DataError):
    pass


class SeriesTooShort(DataError):
    pass


class DegenerateWindow(DataError):
    pass


class InsufficientHistory(DataError):
    pass


class NumericalError(PgpRiskError):
    exit_code = 4


class NonPositiveDefinite(NumericalError):
    pass


class OptimizerDiverged(NumericalError):
    pass


class TailMassUnderflow(NumericalError):
    pass


class ErfDomainError(NumericalError):
    pass


class QuadratureError(NumericalError):
    pass


class StepFailed(PgpRiskError):
    """A backtest step failed; keeps the cause's exit code and names the step."""

    def __init__(self, t: int, cause: PgpRiskError):
        super().__init__(
            f"step t={t} failed with {type(cause).__name__}: {cause}",
            details=[f"t={t}", type(cause).__name__, *cause.details],
        )
        self.t = t
        self.cause = cause
        self.exit_code = cause.exit_code

    def __reduce__(self):
        return (type(self), (self.t, self.cause))

    def to_body(self) -> dict:
        body = super().to_body()
        body["error"] = type(self.cause).__name__
        body["t"] = self.t
        return body
