"""Exception hierarchy shared across the benchmark."""

from __future__ import annotations


class FewieBenchError(Exception):
    """Base class for all errors raised by this package."""


class CorpusParseError(FewieBenchError):
    """Corpus file violates the expected format.

    Carries the 1-based line number of the offending line when known.
    """

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class EmptyCorpusError(CorpusParseError):
    """Input contained no sentences."""


class InfeasibleEpisodeError(FewieBenchError):
    """The sampler exhausted its retry budget without a valid episode.

    ``entity_type`` names the class that most recently blocked sampling.
    """

    def __init__(self, message: str, entity_type: str | None = None):
        super().__init__(message)
        self.entity_type = entity_type


class StoreError(FewieBenchError):
    """Base class for embedding-store failures."""


class StoreFormatError(StoreError):
    """File is not a valid embedding store (bad magic or version)."""


class StoreCorruptionError(StoreError):
    """Store index points past the end of the file."""


class MissingEmbeddingError(StoreError):
    """Requested sentence id is not present in the store."""


class AlignmentError(FewieBenchError):
    """Stored token count disagrees with the corpus sentence."""


class NumericError(FewieBenchError):
    """An optimization produced non-finite values."""


class ConfigError(FewieBenchError):
    """Experiment configuration is missing or inconsistent."""
