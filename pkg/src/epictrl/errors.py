"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid configuration input; the message names the offending field."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class DomainError(ValueError):
    """Argument outside the model's admissible domain."""


class NumericalError(RuntimeError):
    """A linear solve or marching step produced an unusable result."""


class LineSearchError(RuntimeError):
    """Nonmonotone line search exhausted its backtracking budget."""

    def __init__(self, message: str, diagnostics=None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)
