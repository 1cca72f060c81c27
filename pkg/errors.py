# errors.py
from __future__ import annotations


class UlabError(RuntimeError):
    """Base class for every error raised by this project."""


class ConvergenceError(UlabError):
    pass


class RankDeficientError(UlabError):
    """A least-squares subproblem or a measurement operator is (numerically) rank deficient."""


class DimensionError(UlabError, ValueError):
    pass


class DomainError(UlabError, ValueError):
    """An argument is outside the range a formula or solver is defined on."""


class ConfigError(UlabError, ValueError):
    pass


class CsvFormatError(UlabError, ValueError):
    def __init__(self, path: str, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


class OperatorFileError(UlabError, ValueError):
    pass
