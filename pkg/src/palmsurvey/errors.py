"""Exception types shared across the survey pipeline."""


class DomainError(ValueError):
    """Input violates a documented precondition or value range."""


class ProtocolError(RuntimeError):
    """A detector backend sent a message that does not parse against the wire schema."""

    def __init__(self, message: str, line: str = ""):
        super().__init__(message)
        self.line = line


class BackendError(RuntimeError):
    """A detector backend crashed, timed out, or reported a request failure."""


class PersistenceError(OSError):
    """The tree registry could not read or write its store file."""


class ProviderError(RuntimeError):
    """An imagery provider request failed (auth, quota, transport)."""
