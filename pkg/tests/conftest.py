import numpy as np
import pytest

from factqa.encoding import build_vocab
from factqa.kb import ExplanatoryFact, KnowledgeBase, KnowledgeCategory, Triple


@pytest.fixture
def two_triple_kb() -> KnowledgeBase:
    facts = [
        ExplanatoryFact("t#0", "t", KnowledgeCategory.RETRIEVAL,
                        (("x", "ice"), ("r", "is a kind of"), ("y", "solid"))),
        ExplanatoryFact("t#1", "t", KnowledgeCategory.RETRIEVAL,
                        (("x", "steam"), ("r", "is a kind of"), ("y", "gas"))),
    ]
    triples = [
        Triple("ice", "is a kind of", "solid", "t#0"),
        Triple("steam", "is a kind of", "gas", "t#1"),
    ]
    return KnowledgeBase(facts=facts, triples=triples)


@pytest.fixture
def small_vocab():
    corpus = [
        ["ice", "is", "a", "kind", "of", "solid"],
        ["steam", "is", "a", "kind", "of", "gas"],
        ["a", "b", "c", "d", "e"],
    ]
    return build_vocab(corpus, min_freq=1, max_size=100)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
