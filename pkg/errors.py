"""
Exception hierarchy shared by every module.

Library code raises these; only main.py turns them into exit codes.
"""

from typing import Any, Optional


class DonaldsonError(Exception):
    """Base class for all errors raised by the package."""

    kind = "error"
    exit_code = 1

    def to_dict(self) -> dict:
        return {"error": self.kind, "message": str(self)}


class InvalidInputError(DonaldsonError, ValueError):
    """Malformed input: bad variable index, grid too small, unparsable text."""

    kind = "invalid-input"
    exit_code = 1


class ConstraintViolationError(DonaldsonError):
    """An exact constraint failed; carries the nonzero residual polynomial."""

    kind = "constraint-violation"
    exit_code = 2

    def __init__(self, message: str, residual: Optional[Any] = None):
        super().__init__(message)
        self.residual = residual

    def to_dict(self) -> dict:
        data = super().to_dict()
        if self.residual is not None:
            data["residual"] = str(self.residual)
            if hasattr(self.residual, "to_dict"):
                data["residual_poly"] = self.residual.to_dict()
        return data


class UnsupportedError(DonaldsonError):
    """Input lies outside what a symbolic path covers."""

    kind = "unsupported"
    exit_code = 2


class InternalConsistencyError(DonaldsonError):
    kind = "internal-consistency"
    exit_code = 2


class NumericFailureError(DonaldsonError):
    kind = "numeric-failure"
    exit_code = 3


class EllipticityViolationError(NumericFailureError):
    """u_tt, the Laplacian or Q left the positive cone where it must not."""

    kind = "ellipticity-violation"


class TransformDomainError(NumericFailureError):
    kind = "transform-domain"


class SolverFailureError(NumericFailureError):
    """Dirichlet solve did not converge; carries the SolveReport."""

    kind = "solver-failure"

    def __init__(self, message: str, report: Optional[Any] = None):
        super().__init__(message)
        self.report = report

    def to_dict(self) -> dict:
        data = super().to_dict()
        if self.report is not None:
            data["status"] = self.report.status
            data["final_residual"] = self.report.final_residual
        return data
