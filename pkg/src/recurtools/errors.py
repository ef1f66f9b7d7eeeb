"""Exception taxonomy shared across the package.

Exceptions carry a short machine-readable ``code`` so the CLI can map them to
exit codes (data problems -> 2, numerical/simulation failures -> 3) and tests
can assert on the condition rather than the message text.
"""
from __future__ import annotations


class RecurtoolsError(Exception):
    """Base class for all library errors."""

    code = "ERROR"

    def __init__(self, message: str = "", code: str | None = None):
        super().__init__(message or self.code)
        if code is not None:
            self.code = code


class DataError(RecurtoolsError):
    """Malformed or inconsistent input data (CSV layout, table invariants...)."""

    code = "DATA"


class EmptyInputError(DataError):
    code = "EMPTY_INPUT"


class PanelTooShortError(DataError):
    code = "PANEL_TOO_SHORT"


class DegenerateArmError(DataError):
    code = "DEGENERATE_ARM"


class NoEventsError(DataError):
    code = "NO_EVENTS"


class HROneError(DataError):
    """Hazard ratio of exactly 1 leaves the event count undefined."""

    code = "HR_ONE"


class NumericError(RecurtoolsError):
    """Numerical failure: a computation could not be completed reliably."""

    code = "NUMERIC"


class NonConvergenceError(NumericError):
    code = "NON_CONVERGENCE"


class InsufficientEventsError(NumericError):
    """Event-driven design asked for more first events than the trial produced."""

    code = "INSUFFICIENT_EVENTS"


class RecruitOverrunError(NumericError):
    """Study would close before the last patient is recruited."""

    code = "RECRUIT_OVERRUN"


class TooFewReplicatesError(NumericError):
    code = "TOO_FEW_REPLICATES"
