"""Exception hierarchy shared by all modules."""


class NMAError(Exception):
    """Base class for domain errors raised by the package."""


class ConeViolation(NMAError):
    """An eigenvalue vector left the admissible cone.

    ``where`` optionally carries the offending node (flat index or tuple).
    """

    def __init__(self, message, where=None):
        super().__init__(message)
        self.where = where


class PreconditionViolation(NMAError):
    pass


class ToleranceViolation(NMAError):
    pass


class SingularMetric(NMAError):
    pass


class GridTooCoarse(NMAError):
    pass


class NoConvergence(NMAError):
    def __init__(self, message, at=None):
        super().__init__(message)
        self.at = at


class SubsolutionNotFound(NMAError):
    pass


class ParseError(NMAError):
    def __init__(self, message, line=None, column=None):
        loc = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + loc)
        self.line = line
        self.column = column


class SchemaError(NMAError):
    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
