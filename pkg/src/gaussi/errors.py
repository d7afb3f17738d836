"""Exception hierarchy shared by the engine, the language frontend and the CLI."""


class GaussiError(Exception):
    """Base class for every error raised by gaussi."""


class StateError(GaussiError, ValueError):
    """Invalid operation on a Gaussian state (unknown or duplicate names, bad parameters)."""


class SupportError(StateError):
    """Observation outside the support of a zero-variance variable."""


class NumericalError(StateError):
    """A covariance update left the state outside the PSD tolerance."""


class ParseError(GaussiError):
    def __init__(self, message, line=None, col=None):
        self.message = message
        self.line = line
        self.col = col
        where = f"{line}:{col}: " if line is not None else ""
        super().__init__(f"{where}{message}")


class ValidationError(GaussiError):
    """Raised when a program is run without passing :func:`gaussi.lang.validate`."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


class ExecutionError(GaussiError):
    def __init__(self, message, line=None, col=None):
        self.message = message
        self.line = line
        self.col = col
        where = f"{line}:{col}: " if line is not None else ""
        super().__init__(f"{where}{message}")
