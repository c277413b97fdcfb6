"""
Exception hierarchy for the CAN translation toolkit.
"""


class CanTranslationError(Exception):
    """Base class for every error raised by the toolkit."""


class UnreadableInput(CanTranslationError):
    """The capture could not be read from disk or stream."""


class FormatError(CanTranslationError):
    """Too many lines failed to parse; the log is probably in another format."""


class MalformedDiagnosticFrame(CanTranslationError):
    """A frame on a diagnostic AID is not a Mode-01 single-frame response."""


class InsufficientOverlap(CanTranslationError):
    """Too few diagnostic times fall inside the AID trace's time span."""


class NoVariance(CanTranslationError):
    """The token is constant over the aligned window."""


class DivisionByZeroVariance(CanTranslationError):
    """The diagnostic values are constant, so R² is undefined."""


class TooManyCandidates(CanTranslationError):
    """Exhaustive packing was asked to search too many intervals."""


class LayoutOverlap(CanTranslationError):
    """Two synthetic signals in one AID share a bit."""


class RangeOverflow(CanTranslationError):
    """A channel's range cannot be encoded in its token width."""


class ConfigError(CanTranslationError):
    """A configuration value failed validation."""


class SchemaMismatch(CanTranslationError):
    """A report or ground truth document has an unexpected shape or version."""


class NoUsableDiagnostics(CanTranslationError):
    """No AID/DID pair had enough overlapping samples to fit."""


class InvariantViolation(CanTranslationError):
    """An internal consistency check failed."""
