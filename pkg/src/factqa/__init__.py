"""factqa: transfer explanatory fact knowledge into a neural pair classifier.

The pipeline turns semi-structured fact tables into subject/predicate/object
triples, trains a small transformer to judge (question, answer) pairs through
three stages (knowledge completion, cloze QA, target fine-tuning), and
evaluates multiple-choice science QA against a BM25 retrieval baseline.
"""

__version__ = "0.1.0"

from factqa.errors import (
    ConfigurationError,
    EncodingError,
    EvaluationError,
    GenerationError,
    LoadError,
    NumericError,
    ParseError,
)

__all__ = [
    "ConfigurationError",
    "EncodingError",
    "EvaluationError",
    "GenerationError",
    "LoadError",
    "NumericError",
    "ParseError",
    "__version__",
]
