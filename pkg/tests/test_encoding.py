import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from factqa.encoding import (
    CLS,
    PAD,
    SEP,
    UNK,
    Vocabulary,
    build_vocab,
    decode_pair,
    encode_pair,
    stack_encoded,
)
from factqa.errors import EncodingError
from factqa.text import tokenize


class TestBuildVocab:
    def test_reserved_ids(self, small_vocab):
        assert small_vocab.token_to_id["[PAD]"] == PAD == 0
        assert small_vocab.token_to_id["[UNK]"] == UNK == 1
        assert small_vocab.token_to_id["[CLS]"] == CLS == 2
        assert small_vocab.token_to_id["[SEP]"] == SEP == 3

    def test_empty_corpus_specials_only(self):
        vocab = build_vocab([], min_freq=1, max_size=10)
        assert len(vocab) == 4

    def test_frequency_then_alpha_ranking(self):
        corpus = [["b", "b", "a", "a", "c"]]
        vocab = build_vocab(corpus, min_freq=1, max_size=100)
        assert vocab.token_to_id["a"] == 4  # ties broken alphabetically
        assert vocab.token_to_id["b"] == 5
        assert vocab.token_to_id["c"] == 6

    def test_min_freq_filters(self):
        vocab = build_vocab([["rare"], ["common", "common"]], min_freq=2, max_size=100)
        assert "rare" not in vocab.token_to_id
        assert "common" in vocab.token_to_id

    def test_max_size_truncates(self):
        corpus = [[f"w{i}" for i in range(100)]]
        vocab = build_vocab(corpus, min_freq=1, max_size=10)
        assert len(vocab) == 10

    def test_save_load_round_trip(self, small_vocab, tmp_path):
        path = tmp_path / "vocab.txt"
        small_vocab.save(path)
        back = Vocabulary.load(path)
        assert back.token_to_id == small_vocab.token_to_id


class TestEncodePair:
    def test_exact_layout(self, small_vocab):
        vocab = build_vocab([["a", "b", "c"]], max_size=10)
        enc = encode_pair("a b", "c", vocab, max_len=8)
        a, b, c = vocab.token_to_id["a"], vocab.token_to_id["b"], vocab.token_to_id["c"]
        assert enc.token_ids.tolist() == [CLS, a, b, SEP, c, SEP, PAD, PAD]
        assert enc.segment_ids.tolist() == [0, 0, 0, 0, 1, 1, 0, 0]
        assert enc.attention_mask.tolist() == [1, 1, 1, 1, 1, 1, 0, 0]

    def test_empty_question(self, small_vocab):
        enc = encode_pair("", "ice", small_vocab, max_len=8)
        ids = enc.token_ids.tolist()
        assert ids[0] == CLS and ids[1] == SEP
        assert ids[2] == small_vocab.token_to_id["ice"]
        assert ids[3] == SEP

    def test_unknown_tokens_mapped_to_unk(self, small_vocab):
        enc = encode_pair("zzzz", "ice", small_vocab, max_len=8)
        assert enc.token_ids[1] == UNK

    def test_question_truncated_from_right(self, small_vocab):
        question = " ".join(["ice"] * 300)
        enc = encode_pair(question, "solid gas", small_vocab, max_len=128)
        # oracle: 128 positions minus [CLS], two [SEP] and the 2 answer tokens
        kept = 128 - 3 - 2
        n_real = int(enc.attention_mask.sum())
        assert n_real == 128
        q_tokens, a_tokens = decode_pair(enc, small_vocab)
        assert len(q_tokens) == kept == 123
        assert a_tokens == ["solid", "gas"]

    def test_answer_too_long_is_error(self, small_vocab):
        with pytest.raises(EncodingError, match="answer"):
            encode_pair("q", " ".join(["ice"] * 10), small_vocab, max_len=8)

    def test_max_len_floor(self, small_vocab):
        with pytest.raises(EncodingError):
            encode_pair("a", "b", small_vocab, max_len=4)

    def test_decode_round_trip(self, small_vocab):
        q, a = "ice is a kind of", "solid"
        enc = encode_pair(q, a, small_vocab, max_len=16)
        q_tokens, a_tokens = decode_pair(enc, small_vocab)
        assert q_tokens == tokenize(q)
        assert a_tokens == tokenize(a)


words = st.lists(st.sampled_from(["ice", "is", "a", "kind", "of", "solid", "gas"]),
                 min_size=0, max_size=20)


@settings(max_examples=50)
@given(q_words=words, a_words=st.lists(
    st.sampled_from(["ice", "solid", "gas"]), min_size=1, max_size=4))
def test_segment_boundary_property(q_words, a_words):
    vocab = build_vocab([["ice", "is", "a", "kind", "of", "solid", "gas"]], max_size=50)
    enc = encode_pair(" ".join(q_words), " ".join(a_words), vocab, max_len=32)
    ids = enc.token_ids.tolist()
    segs = enc.segment_ids.tolist()
    mask = enc.attention_mask.tolist()
    seps = [i for i, t in enumerate(ids) if t == SEP]
    assert len(seps) == 2
    first, second = seps
    assert ids[0] == CLS
    # segments: 0 through the first separator, 1 through the second, 0 on padding
    assert all(s == 0 for s in segs[: first + 1])
    assert all(s == 1 for s in segs[first + 1 : second + 1])
    assert all(s == 0 for s in segs[second + 1 :])
    assert all(m == 1 for m in mask[: second + 1])
    assert all(m == 0 for m in mask[second + 1 :])


def test_stack_encoded_shapes(small_vocab):
    encs = [encode_pair("a", "ice", small_vocab, 8) for _ in range(3)]
    batch = stack_encoded(encs)
    assert batch.token_ids.shape == (3, 8)
    assert len(batch) == 3
    sub = batch.take(np.array([0, 2]))
    assert sub.token_ids.shape == (2, 8)


def test_stack_empty_rejected():
    with pytest.raises(EncodingError):
        stack_encoded([])
