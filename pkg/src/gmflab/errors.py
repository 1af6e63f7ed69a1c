"""Exception hierarchy shared by every module."""


class GmfLabError(Exception):
    """Base class for all errors raised by gmflab."""


class ShapeError(GmfLabError, ValueError):
    pass


class ContractError(GmfLabError, ValueError):
    """A precondition on the arguments of an operation was violated."""


class ConfigError(GmfLabError, ValueError):
    """Invalid configuration. ``key`` names the offending entry when known."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class DomainError(GmfLabError, ValueError):
    pass


class ConvergenceError(GmfLabError, RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


class NonFiniteError(GmfLabError, FloatingPointError):
    """An operation produced NaN or Inf."""
