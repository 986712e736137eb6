"""Exception types shared across the package."""


class StructuralError(ValueError):
    """Objects that cannot be combined: mismatched spaces, invalid maps or kernels."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class ConvergenceError(RuntimeError):
    """An iterative routine hit its cap before meeting its stopping rule.

    Attributes
    ----------
    last : object
        The last iterate computed.
    residual : float
        The value of the stopping quantity at ``last``.
    history : list
        Optional record of the stopping quantity, oldest first.
    """

    def __init__(self, message, last=None, residual=float("nan"), history=None):
        super().__init__(message)
        self.last = last
        self.residual = residual
        self.history = list(history) if history is not None else []


class ConfigError(ValueError):
    """Malformed or invalid run configuration."""

    def __init__(self, message, line=None, column=None):
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)
        self.message = message
        self.line = line
        self.column = column
