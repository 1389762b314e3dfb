"""Exception hierarchy. Each family maps to one CLI exit code."""


class SeqomError(Exception):
    exit_code = 1


class ConfigError(SeqomError, ValueError):
    exit_code = 2


class DataError(SeqomError, ValueError):
    exit_code = 3


class DegenerateError(SeqomError, ArithmeticError):
    """Raised when a statistic is undefined for the given input."""

    exit_code = 4


class EncodingWarning(UserWarning):
    pass
