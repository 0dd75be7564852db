"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Inconsistent shapes, unknown options or malformed configuration."""


class NumericError(ArithmeticError):
    """A non-finite value appeared during evaluation or optimization.

    ``op_index`` is the position of the first offending node on the tape (or
    the iteration / step index, depending on where it was raised).
    """

    def __init__(self, message, op_index=None, op_name=None):
        super().__init__(message)
        self.op_index = op_index
        self.op_name = op_name
