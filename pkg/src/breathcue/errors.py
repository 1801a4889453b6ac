"""Exception hierarchy; the CLI maps each class to an exit code."""


class BreathcueError(Exception):
    """Base class for all library errors."""


class ConfigError(BreathcueError, ValueError):
    """Inconsistent shapes, dimensions or configuration values (exit code 2)."""


class InputError(BreathcueError, ValueError):
    """Malformed or out-of-contract input data (exit code 3)."""


class StateError(BreathcueError, RuntimeError):
    """An object was used before it reached a valid state."""


class NumericError(BreathcueError, ArithmeticError):
    """Non-finite values during training or evaluation (exit code 4)."""
