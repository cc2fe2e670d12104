"""Exception hierarchy shared by every module.

Each class carries the CLI exit code it maps to.
"""


class RmsccaError(Exception):
    exit_code = 1


class InvalidInputError(RmsccaError, ValueError):
    exit_code = 2


class ParseError(InvalidInputError):
    """Malformed matrix file; message includes the row/column location."""


class ConfigError(RmsccaError, ValueError):
    exit_code = 4


class DegeneracyError(RmsccaError, ArithmeticError):
    exit_code = 3


class DegenerateColumnError(DegeneracyError):
    def __init__(self, column, which="x"):
        self.column = column
        self.which = which
        super().__init__(f"column {column!r} of {which} has zero variance")


class DegeneratePairError(DegeneracyError):
    """Soft-thresholding removed every entry of u or v."""

    def __init__(self, lambda_u, lambda_v, side):
        self.lambda_u = lambda_u
        self.lambda_v = lambda_v
        self.side = side
        super().__init__(
            f"thresholding annihilated {side} at lambda_u={lambda_u}, lambda_v={lambda_v}"
        )


class NoViableLambdaError(DegeneracyError):
    def __init__(self, pair_index=None):
        self.pair_index = pair_index
        msg = "every lambda grid cell was degenerate"
        if pair_index is not None:
            msg += f" (pair {pair_index + 1})"
        super().__init__(msg)
