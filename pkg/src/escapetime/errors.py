"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class EscapeTimeError(Exception):
    exit_code = 1


class ValidationError(EscapeTimeError, ValueError):
    """Input violates a documented contract (bad weights, dangling nodes, bad config)."""

    exit_code = 2


class GraphParseError(ValidationError):
    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class SolverError(EscapeTimeError, RuntimeError):
    exit_code = 3

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SingularSystemError(SolverError):
    """The regularized or restricted operator is singular.

    ``trapped`` lists node indices that cannot reach any node carrying a
    positive potential (or the complement set); ``components`` groups them
    by strongly connected component.
    """

    def __init__(self, message, trapped=(), components=()):
        super().__init__(message)
        self.trapped = tuple(trapped)
        self.components = tuple(tuple(c) for c in components)


class CapExceededError(EscapeTimeError):
    exit_code = 4


class ConnectivityWarning(UserWarning):
    pass
