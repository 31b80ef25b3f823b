from hypothesis import given
from hypothesis import strategies as st

from factqa.text import normalize_cell, tokenize


def test_tokenize_basic():
    assert tokenize("Ice is a KIND of solid.") == ["ice", "is", "a", "kind", "of", "solid"]


def test_tokenize_empty():
    assert tokenize("") == []
    assert tokenize("   ") == []


def test_tokenize_strips_edge_punctuation():
    assert tokenize("H2O (water)") == ["h2o", "water"]
    assert tokenize("don't stop!") == ["don't", "stop"]
    assert tokenize("... --- !!!") == []


@given(st.text())
def test_tokenize_never_yields_empty_tokens(text):
    for tok in tokenize(text):
        assert tok
        assert tok == tok.lower()


@given(st.text())
def test_tokenize_idempotent_on_own_output(text):
    once = tokenize(text)
    assert tokenize(" ".join(once)) == once


def test_normalize_cell():
    assert normalize_cell("  Ice   Cube ") == "ice cube"
    assert normalize_cell("(water)") == "water"
    assert normalize_cell("") == ""
