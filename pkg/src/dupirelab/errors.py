class DomainError(ValueError):
    """Argument outside the operation's domain (time off-grid, bad dimension, ...)."""


class GridMismatchError(DomainError):
    pass


class NumericError(ArithmeticError):
    """A computation produced a non-finite value."""


class ContractError(ValueError):
    """Input violates a documented precondition (e.g. a jumping path where a continuous one is required)."""


class BudgetError(RuntimeError):
    """Requested work exceeds the configured cap."""


class ConfigError(ValueError):
    """Invalid experiment configuration."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key
