# Exceptions raised by the learning package


__all__ = [
    'RLError',
    'ShapeError',
    'TrainingError',
    'ConfigError',
    'RoutineError',
]


class RLError(Exception):
    """Base class for every error raised by the rl package."""


class ShapeError(RLError, ValueError):
    """An input does not match the dimension a network or table was built for."""


class TrainingError(RLError, ArithmeticError):
    """A loss, gradient or parameter became non-finite during an update."""

    def __init__(self, message, iteration=None, diagnostic=None):
        self.iteration = iteration
        self.diagnostic = diagnostic or {}
        if iteration is not None:
            message = "iteration {0}: {1}".format(iteration, message)
        super().__init__(message)


class ConfigError(RLError, ValueError):
    """Unknown configuration key or a value of the wrong type/range."""


class RoutineError(RLError, ValueError):
    """A routine file is malformed or a ranked routine lacks its ranking."""
