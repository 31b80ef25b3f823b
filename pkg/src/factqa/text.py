"""Whitespace tokenization and cell normalization shared by the encoder
vocabulary, the BM25 index, and table ingestion."""

import re
import string

_PUNCT = string.punctuation
_WS = re.compile(r"\s+")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip punctuation off token edges.

    Interior punctuation survives ("don't" stays intact, "(water)" -> "water");
    tokens that were pure punctuation are dropped.
    """
    out = []
    for raw in text.lower().split():
        tok = raw.strip(_PUNCT)
        if tok:
            out.append(tok)
    return out


def normalize_cell(text: str) -> str:
    """Lowercase, collapse internal whitespace, strip surrounding punctuation."""
    return _WS.sub(" ", text.strip()).lower().strip(_PUNCT).strip()
