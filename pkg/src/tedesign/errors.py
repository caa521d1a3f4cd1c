"""Exception types shared across the package.

Each error carries an ``exit_code`` used by the command-line front end:
2 for bad data, 3 for degenerate designs.
"""


class DesignError(Exception):
    exit_code = 2


class NonFiniteInput(DesignError, ValueError):
    pass


class DimensionMismatch(DesignError, ValueError):
    pass


class InvalidDimension(DesignError, ValueError):
    pass


class EmptySpectrum(DesignError):
    """Every singular value fell below the smoothing threshold."""

    exit_code = 3


class ZeroLeverage(DesignError, ValueError):
    pass


class ZeroMatrix(DesignError, ValueError):
    pass


class ZeroCovariates(DesignError, ValueError):
    pass


class OracleViolation(DesignError):
    """A design asked for both potential outcomes of the same unit."""

    exit_code = 3


class DegeneratePartition(DesignError):
    exit_code = 3


class ParseError(DesignError, ValueError):
    def __init__(self, message, row=None, column=None):
        loc = ""
        if row is not None:
            loc = f" (row {row}" + (f", column {column})" if column is not None else ")")
        super().__init__(message + loc)
        self.row = row
        self.column = column


class MissingGroundTruth(DesignError):
    pass


class EmptyInput(DesignError, ValueError):
    pass


class EmptySample(DesignError):
    """One of the two sample sets came out empty, so that arm was not fit."""

    exit_code = 3
