"""Exception types shared across the pipeline."""


class FactQaError(Exception):
    """Base class for all package errors."""


class ParseError(FactQaError):
    """Malformed table or question file content."""


class LoadError(FactQaError):
    """Missing or unreadable input artifacts."""


class ConfigurationError(FactQaError):
    """Invalid mapping/config values (e.g. mapping names an absent column)."""


class GenerationError(FactQaError):
    """Training-pair generation preconditions violated."""


class EncodingError(FactQaError):
    """A (question, answer) pair cannot fit the fixed sequence layout."""


class NumericError(FactQaError):
    """Non-finite value produced during forward/backward or training."""


class EvaluationError(FactQaError):
    """A question could not be scored at all."""
