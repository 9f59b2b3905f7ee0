"""
Exception hierarchy for the solvers.

Every exception carries the process exit code the CLI reports, the same way a
web handler carries a status code next to its detail message.
"""

from typing import Optional


class LaneEmdenException(Exception):
    """Root of all solver errors"""

    exit_code: int = 3

    def __init__(self, detail: str, exit_code: Optional[int] = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code

    def __str__(self) -> str:
        return self.detail


class InvalidParameterError(LaneEmdenException):
    """A precondition of an operation is violated (bad gamma, kappa, grid size...)"""
    exit_code = 2


class ProfileInvariantError(LaneEmdenException):
    """A StarProfile does not satisfy its invariants"""


class BracketError(LaneEmdenException):
    """No sign change / no eigenvalue bracket where one was required"""


class ZeroPivotError(LaneEmdenException):
    """Exact zero pivot in a symmetric tridiagonal LDL^T factorization"""

    def __init__(self, detail: str, index: int):
        super().__init__(detail)
        self.index = index


class ConvergenceError(LaneEmdenException):
    """An iterative solver did not reach its tolerance"""


class CFLViolationError(LaneEmdenException):
    """Time step exceeds the acoustic stability limit"""


class CellInversionError(LaneEmdenException):
    """Lagrangian cells crossed (eta lost strict monotonicity)"""

    def __init__(self, detail: str, time: float):
        super().__init__(f"{detail} at t={time:.6g}")
        self.time = time


class InsufficientDataError(LaneEmdenException):
    """Not enough usable records for a fit or verdict"""


class VerificationFailure(LaneEmdenException):
    """At least one acceptance criterion failed"""
    exit_code = 1
