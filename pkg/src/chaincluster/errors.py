"""Exception types shared across the package.

The CLI maps ``ParseError`` and ``ValidationError`` to exit code 2 and
``NumericalError`` to exit code 1.
"""


class ChainClusterError(Exception):
    pass


class ParseError(ChainClusterError, ValueError):
    def __init__(self, message, line_no=None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class ValidationError(ChainClusterError, ValueError):
    pass


class NumericalError(ChainClusterError, ArithmeticError):
    pass
