"""Exception types shared by every layer."""

from __future__ import annotations


class DialactError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(DialactError):
    """Malformed input text; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(DialactError):
    """Well-formed input that violates a structural invariant."""


class UnknownActError(DialactError):
    def __init__(self, label: str, line: int | None = None):
        self.label = label
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"unknown speech act {label!r}{where}")


class UntrainedModelError(DialactError):
    pass


class DegenerateHeldOutError(DialactError):
    pass


class NonterminatingSourceError(DialactError):
    pass


class UnprocessedTurnError(DialactError):
    pass


class UndefinedGoalError(ValidationError):
    pass


class DuplicateGoalError(ValidationError):
    pass


class CyclicGoalError(ValidationError):
    pass
