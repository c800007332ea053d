# Exceptions raised by the LP engine


__all__ = [
    'LPError',
    'BoundArithmeticError',
    'DimensionError',
    'UnsupportedPresolverError',
    'InfeasibleDetected',
    'MPSFormatError',
    'GeneratorError',
]


class LPError(Exception):
    """Base class for every error raised by the lp package."""


class BoundArithmeticError(LPError, ArithmeticError):
    """An extended-real operation had no defined value (e.g. inf - inf)."""


class DimensionError(LPError, IndexError):
    """A row/column index is out of range or two objects disagree on shape."""


class UnsupportedPresolverError(LPError, ValueError):
    def __init__(self, presolver):
        self.presolver = presolver
        super().__init__("unsupported presolver: {0!r}".format(presolver))


class InfeasibleDetected(LPError):
    """A presolver proved the problem infeasible.

    :ivar presolver: id of the presolver that found the violation
    :ivar row: row position that cannot be satisfied (None for a column conflict)
    :ivar col: column position with conflicting bounds, if any
    """

    def __init__(self, presolver, row=None, col=None, detail=''):
        self.presolver = presolver
        self.row = row
        self.col = col
        where = 'row {0}'.format(row) if row is not None else 'column {0}'.format(col)
        msg = "presolver {0} detected infeasibility at {1}".format(presolver, where)
        if detail:
            msg += ": " + detail
        super().__init__(msg)


class MPSFormatError(LPError):
    def __init__(self, message, line_number=None):
        self.line_number = line_number
        if line_number is not None:
            message = "line {0}: {1}".format(line_number, message)
        super().__init__(message)


class GeneratorError(LPError, ValueError):
    """Invalid generator parameters or a parameter set yielding an empty problem."""
