class EdgeliftError(Exception):
    """Base class for package errors."""


class IngestError(EdgeliftError, ValueError):
    def __init__(self, message, line=None, field=None, member=None):
        super().__init__(message)
        self.line = line
        self.field = field
        self.member = member


class DegenerateError(EdgeliftError, ArithmeticError):
    """A statistic is undefined for the data (zero-pair class, zero denominator)."""


class UndefinedEstimate(DegenerateError):
    pass
