"""Exception hierarchy shared by every module."""


class VaxcastError(Exception):
    """Base class for all package errors."""


class DomainError(VaxcastError, ValueError):
    """Input lies outside the domain where an operation is defined."""


class ParseError(VaxcastError, ValueError):
    """A data file could not be parsed.

    ``line`` is the 1-based line number in the offending file, when known.
    """

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}"
            if line is not None:
                loc += f":{line}"
            loc += ": "
        super().__init__(loc + message)
        self.path = path
        self.line = line


class RankError(DomainError):
    """Design matrix is rank deficient; ``columns`` names the dependent ones."""

    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)


class EstimationError(VaxcastError, RuntimeError):
    """An iterative estimator failed.

    ``last_iterate`` holds whatever the solver had when it gave up and
    ``diagnostics`` any per-candidate detail worth reporting.
    """

    def __init__(self, message, last_iterate=None, diagnostics=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.diagnostics = diagnostics or {}
