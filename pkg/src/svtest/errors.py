"""Exception hierarchy.

Input problems (bad files, bad columns, inconsistent clusterings) derive from
:class:`InputError`; problems that only show up once the numbers are crunched
derive from :class:`NumericalError`. The CLI maps the two families onto
different exit codes.
"""

from __future__ import annotations


class SvTestError(Exception):
    """Base class for every error raised by this package."""


class InputError(SvTestError, ValueError):
    pass


class MissingColumnError(InputError):
    pass


class DataValueError(InputError):
    """Non-numeric, missing or non-finite cell."""


class NestingError(InputError):
    def __init__(self, message: str, violation=None):
        super().__init__(message)
        self.violation = violation


class NumericalError(SvTestError, ArithmeticError):
    pass


class RankDeficientError(NumericalError):
    def __init__(self, message: str, column: int | None = None):
        super().__init__(message)
        self.column = column


class DegenerateVarianceError(NumericalError):
    """The variance of the contrast is exactly zero.

    Happens when no coarse cluster holds two fine clusters with nonzero
    scores, so fine and coarse clustering cannot be told apart.
    """


class SingularVarianceError(NumericalError):
    def __init__(self, message: str, rcond: float | None = None):
        super().__init__(message)
        self.rcond = rcond


class LeverageError(NumericalError):
    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class BootstrapFailure(NumericalError):
    def __init__(self, message: str, n_failed: int = 0, B: int = 0):
        super().__init__(message)
        self.n_failed = n_failed
        self.B = B


class SequentialAbort(NumericalError):
    """A step of the sequential procedure failed; ``trail`` holds the completed steps."""

    def __init__(self, message: str, trail=None, cause: Exception | None = None):
        super().__init__(message)
        self.trail = list(trail or [])
        self.cause = cause


class ExperimentFailure(NumericalError):
    """Too many Monte Carlo replications failed for the summary to be trusted."""

    def __init__(self, message: str, n_failed: int = 0, R: int = 0):
        super().__init__(message)
        self.n_failed = n_failed
        self.R = R
