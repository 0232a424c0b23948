"""Exception hierarchy shared across the package."""


class SafetilesError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(SafetilesError):
    """An input value is outside its documented domain (latitude bounds, rating range, ...)."""


class TemplateError(SafetilesError):
    """Prompt template could not be rendered (unresolved slot, broken heredoc pairing)."""

    def __init__(self, message: str, slot: str | None = None):
        super().__init__(message)
        self.slot = slot


class IngestError(SafetilesError):
    """Corpus manifest or corpus file could not be ingested."""


class CorpusNotFoundError(SafetilesError):
    """No corpus entry exists for the requested country."""


class TransportError(SafetilesError):
    """Network-level failure talking to an upstream service. Retryable."""


class ProtocolError(SafetilesError):
    """Upstream answered, but the body does not match the expected shape. Not retryable."""


class RatingParseError(SafetilesError):
    """Backend reply could not be turned into an integer rating in [0, 100]."""


class RatingUnavailableError(SafetilesError):
    """No rating could be obtained for a tile (refusal, or parse failure after the reminder retry)."""


class PromptTooLargeError(SafetilesError):
    """Rendered prompt bundle exceeds the configured byte cap; never dispatched."""


class SessionValidationError(SafetilesError):
    """Session configuration rejected; ``fields`` names the offending fields."""

    def __init__(self, message: str, fields: list[str]):
        super().__init__(message)
        self.fields = fields


class UnknownSessionError(SafetilesError):
    """No session with the given id."""


class TileNotRatedError(SafetilesError):
    """Explanation requested for a tile that has no rating in this session."""
