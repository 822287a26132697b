"""Exception types shared across the package."""


class LoopSpamError(Exception):
    """Base class for all package errors."""


class SingularMatrixError(LoopSpamError, ValueError):
    """A matrix that must be inverted is singular or too close to it."""

    def __init__(self, message: str, smallest_singular_value: float | None = None):
        super().__init__(message)
        self.smallest_singular_value = smallest_singular_value


class LabelError(LoopSpamError, KeyError):
    """A state label is unknown, duplicated or inconsistent between trials."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class SiftError(LoopSpamError, ValueError):
    """A session log lacks the rounds needed to build a data matrix."""

    def __init__(self, message: str, missing: list[tuple[str, str]] | None = None):
        super().__init__(message)
        self.missing = list(missing or [])


class ProtocolError(LoopSpamError, RuntimeError):
    """A party or the relay received a message out of order."""


class ConfigError(LoopSpamError, ValueError):
    """A scenario configuration failed validation."""
