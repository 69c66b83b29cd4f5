"""Exception types shared across the toolkit."""

from __future__ import annotations

__all__ = ["ValidationError", "ParseError"]


class ValidationError(ValueError):
    """An input violates a documented invariant or precondition."""


class ParseError(ValidationError):
    """Malformed file content; carries the 1-based line number."""

    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason
