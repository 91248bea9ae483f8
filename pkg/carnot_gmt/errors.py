"""
Error types shared by every carnot_gmt module.

The CLI maps these onto its exit-code contract:
- StructuralError, DomainError, PreconditionError, UsageError -> exit 2
- AuditFailure -> exit 3
"""

from typing import Optional, Sequence


class CarnotGMTError(Exception):
    """Base class for all library errors"""


class StructuralError(CarnotGMTError, ValueError):
    """Malformed group/chart definitions, index out of range, dimension mismatch"""


class DomainError(CarnotGMTError, ValueError):
    """Argument outside the mathematical domain of an operation (r <= 0, p out of range, ...)"""


class UsageError(CarnotGMTError, ValueError):
    """Unknown builtin name or malformed command-line value"""


class PreconditionError(CarnotGMTError):
    """An operation was called outside the hypotheses it is valid under"""


class SingularPointError(CarnotGMTError):
    """Jacobian is rank deficient (the point lies in the singular set)"""

    def __init__(self, message: str, t: Optional[Sequence[float]] = None):
        super().__init__(message)
        self.t = None if t is None else tuple(float(v) for v in t)


class DegenerateRegressionError(CarnotGMTError):
    """Log-log regression cannot be fitted (too few scales or zero variance)"""


class AuditFailure(CarnotGMTError):
    """A convergence audit missed its tolerance"""

    def __init__(self, message: str, details: Optional[dict] = None):
        super().__init__(message)
        self.details = details or {}
