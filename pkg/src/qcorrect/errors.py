"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Input or cotangent has the wrong dimension."""


class NumericError(FloatingPointError):
    """A parameter, gradient or loss became non-finite."""


class ContractError(ValueError):
    """A caller violated a documented precondition (bad action, bad index)."""


class ReplayStateError(RuntimeError):
    """Sampling from an empty replay buffer."""


class ConfigError(ValueError):
    """Invalid experiment configuration.

    ``line`` is the 1-based line in the config file the problem was found on,
    when it can be located.
    """

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line

    def __str__(self):
        msg = super().__str__()
        return f"line {self.line}: {msg}" if self.line is not None else msg
