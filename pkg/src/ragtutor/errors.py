"""Exception hierarchy shared across the package."""


class RagTutorError(Exception):
    """Base class for all package-specific errors."""


class ProviderError(RagTutorError):
    """A remote or scripted provider failed to produce a usable response."""

    def __init__(self, message: str, *, status_code: int | None = None, attempts: int = 1):
        super().__init__(message)
        self.status_code = status_code
        self.attempts = attempts


class UnsupportedOptionError(RagTutorError):
    """A recognised option was given a value this version does not support."""


class EmptyIndexError(RagTutorError):
    """Search was attempted against an index with no entries."""


class IndexMigrationError(RagTutorError):
    """Index file has a different format version than this code expects."""

    def __init__(self, found: int, expected: int):
        super().__init__(f"index format version {found}, expected {expected}")
        self.found = found
        self.expected = expected


class IndexIntegrityError(RagTutorError):
    """Index file is truncated, corrupted, or not an index file at all."""


class FingerprintMismatchError(RagTutorError):
    """Dataset was built against a different chunk set than the one evaluated."""


class DatasetFormatError(RagTutorError):
    """A dataset or fixture file does not conform to its line-delimited schema."""

    def __init__(self, message: str, *, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class GenerationError(RagTutorError):
    """The question generator failed to produce enough parseable questions."""


class SentimentAnalysisError(RagTutorError):
    """The sentiment analyzer output could not be parsed after a reprompt."""


class JudgingError(RagTutorError):
    """The judge model output could not be parsed after a reprompt."""
