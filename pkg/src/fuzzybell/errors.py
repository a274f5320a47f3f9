"""Exception hierarchy shared by the engine and the command-line front-end."""


class FuzzyBellError(Exception):
    """Base class; ``code`` is the machine-greppable tag printed by the CLI."""

    code = "E_INTERNAL"
    exit_status = 1


class ConfigError(FuzzyBellError, ValueError):
    code = "E_CONFIG"
    exit_status = 2


class SizeCapError(FuzzyBellError, ValueError):
    code = "E_SIZE_CAP"
    exit_status = 3


class UndefinedCorrelationError(FuzzyBellError, ArithmeticError):
    """Raised when a correlation is requested on a zero-probability conclusive event."""

    code = "E_UNDEFINED_CORRELATION"
    exit_status = 4
