"""Exception types shared across the package."""


class PomeError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(PomeError, ValueError):
    """An array or network received data of the wrong shape."""


class ContractError(PomeError, RuntimeError):
    """A precondition of an operation was violated."""


class NonFiniteError(PomeError, FloatingPointError):
    """A NaN or infinity was detected where finite values are required."""


class ModelDivergenceError(NonFiniteError):
    """The learned dynamics model produced a non-finite prediction."""


class ConfigError(PomeError, ValueError):
    """A configuration field failed validation."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
