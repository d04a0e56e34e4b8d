"""Exception hierarchy shared by the solver modules."""

from __future__ import annotations


class WeingartenError(Exception):
    """Base class for every error raised by this package."""


class OrderError(WeingartenError, ValueError):
    """An order or index argument is out of range."""


class ShapeError(WeingartenError, ValueError):
    """Array shape or symmetry requirement violated."""


class DomainError(WeingartenError, ValueError):
    """Evaluation point outside the region where a quantity is defined."""


class DegenerateDomainError(DomainError):
    """A level-set domain has no interior nodes or is not inside the grid."""


class AdmissibilityError(WeingartenError):
    """Curvatures left the Garding cone.

    ``violated`` is the first order j with sigma_j <= 0 (0 if unknown),
    ``margin`` the cone margin, ``location`` an optional node index or point.
    """

    def __init__(self, message, violated=0, margin=float("nan"), location=None):
        super().__init__(message)
        self.violated = violated
        self.margin = margin
        self.location = location


class PreconditionerError(WeingartenError):
    """Jacobi preconditioner met a zero diagonal entry."""


class BreakdownError(WeingartenError):
    """BiCGSTAB breakdown (rho or omega vanished)."""


class NonConvergenceError(WeingartenError):
    """Newton iteration stopped without reaching the residual tolerance."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConeExitError(NonConvergenceError):
    """Every damping factor produced an inadmissible iterate."""


class ContinuationError(WeingartenError):
    """Homotopy step size underflowed."""

    def __init__(self, message, stage=None, t=None, history=None):
        super().__init__(message)
        self.stage = stage
        self.t = t
        self.history = history or []


class ExprError(WeingartenError, ValueError):
    """Base class for expression language errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class ExprDomainError(ExprError, DomainError):
    def __init__(self, message, offset=None):
        where = f" (expression offset {offset})" if offset is not None else ""
        super().__init__(message + where)
        self.offset = offset


class ConfigError(WeingartenError, ValueError):
    """Invalid run configuration."""
