"""Exception hierarchy shared by all modules."""


class CsxError(Exception):
    pass


class ModelError(CsxError, ValueError):
    """Invalid model parameters; ``field`` names the offending entry."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class DomainError(CsxError, ValueError):
    pass


class NoAxialFixedPoint(CsxError):
    pass


class BudgetExceeded(CsxError):
    pass


class InverseFailed(CsxError):
    pass


class BracketError(CsxError):
    pass


class HeightUndetermined(CsxError):
    pass


class NotPlanar(CsxError):
    pass


class FormatError(CsxError, ValueError):
    pass


class OrbitOverflow(CsxError, OverflowError):
    """A trajectory left every bounded region (component above 1e12)."""
