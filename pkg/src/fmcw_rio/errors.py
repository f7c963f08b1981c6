class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class DomainError(ValueError):
    """Input outside the domain of a measurement relation."""


class InitializationError(RuntimeError):
    """At-rest initialization could not be performed."""


class DatasetError(ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
