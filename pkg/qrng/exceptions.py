"""Error hierarchy shared by the generator modules and the command line.

Each family maps onto one process exit code: configuration problems exit 1,
bit-file and other I/O problems exit 2, numerical failures exit 3.
"""


class QrngError(Exception):
    """Base class of all generator errors."""

    exit_code = 3


class ConfigurationError(QrngError, ValueError):
    """Invalid configuration, options or inputs; carries every violation found."""

    exit_code = 1

    def __init__(self, message, violations=None):
        self.violations = list(violations or [])
        if self.violations:
            message = f"{message}: {'; '.join(self.violations)}"
        super().__init__(message)


class InsufficientDataError(ConfigurationError):
    """Input is too short (or has too few runs/bins) for the requested statistic."""


class BitFileError(QrngError):
    """Malformed or truncated bit file."""

    exit_code = 2


class NumericalError(QrngError, ArithmeticError):
    """A computation could not produce a trustworthy number."""

    exit_code = 3


class FitConvergenceError(NumericalError):
    """Least-squares fit did not converge; ``residuals`` holds the last residual vector."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class CovarianceError(NumericalError):
    """A filter covariance lost positive-definiteness."""


class DeembedError(NumericalError):
    """Quadrature subtraction of backgrounds larger than the total."""


def exit_code_for(exc):
    """Exit code for an exception raised by a command."""
    if isinstance(exc, QrngError):
        return exc.exit_code
    if isinstance(exc, OSError):
        return 2
    return 3
