class CaulkError(ValueError):
    """Base class for rejected inputs and failed operations."""


class SpecError(CaulkError):
    pass


class DomainError(CaulkError):
    pass


class DimensionError(CaulkError):
    pass


class FitError(CaulkError):
    pass


class FormatError(CaulkError):
    """Malformed serialized text; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(CaulkError):
    def __init__(self, key: str, message: str):
        super().__init__(f"config key '{key}': {message}")
        self.key = key
