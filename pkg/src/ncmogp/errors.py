"""Exception hierarchy; the CLI maps each class to its own exit code."""


class NcmogpError(Exception):
    exit_code = 1


class ConfigError(NcmogpError, ValueError):
    exit_code = 2


class DataError(NcmogpError, ValueError):
    exit_code = 3


class NumericalError(NcmogpError, ArithmeticError):
    """Raised when a covariance is non-finite or cannot be factorised."""

    exit_code = 4

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
