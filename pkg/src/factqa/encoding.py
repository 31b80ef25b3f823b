"""Vocabulary construction and the fixed token-sequence layout fed to the encoder.

Every (question, answer) pair is compiled to
``[CLS] question-tokens [SEP] answer-tokens [SEP] [PAD]...`` with segment ids
0 through the first separator and 1 after it, and an attention mask that is 1
exactly on non-padding positions.
"""

from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from factqa.errors import EncodingError
from factqa.text import tokenize

PAD, UNK, CLS, SEP = 0, 1, 2, 3
PAD_TOKEN, UNK_TOKEN, CLS_TOKEN, SEP_TOKEN = "[PAD]", "[UNK]", "[CLS]", "[SEP]"
SPECIAL_TOKENS = (PAD_TOKEN, UNK_TOKEN, CLS_TOKEN, SEP_TOKEN)

DEFAULT_MAX_LEN = 128
MIN_MAX_LEN = 8


@dataclass
class Vocabulary:
    token_to_id: dict[str, int]

    def __len__(self) -> int:
        return len(self.token_to_id)

    def id_of(self, token: str) -> int:
        return self.token_to_id.get(token, UNK)

    def tokens_in_order(self) -> list[str]:
        return [tok for tok, _ in sorted(self.token_to_id.items(), key=lambda kv: kv[1])]

    def save(self, path: Path) -> None:
        Path(path).write_text("\n".join(self.tokens_in_order()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "Vocabulary":
        tokens = Path(path).read_text(encoding="utf-8").splitlines()
        if tuple(tokens[:4]) != SPECIAL_TOKENS:
            raise EncodingError(f"vocabulary file {path} lacks the reserved special tokens")
        return cls(token_to_id={tok: i for i, tok in enumerate(tokens)})


def build_vocab(
    corpus: Iterable[Sequence[str]], min_freq: int = 1, max_size: int = 20000
) -> Vocabulary:
    """Rank tokens by (frequency desc, token asc); keep at most max_size ids
    including the 4 reserved ones."""
    freq: Counter[str] = Counter()
    for tokens in corpus:
        freq.update(tokens)
    kept = sorted(
        (tok for tok, n in freq.items() if n >= min_freq and tok not in SPECIAL_TOKENS),
        key=lambda tok: (-freq[tok], tok),
    )[: max(0, max_size - len(SPECIAL_TOKENS))]
    token_to_id = {tok: i for i, tok in enumerate(SPECIAL_TOKENS)}
    for tok in kept:
        token_to_id[tok] = len(token_to_id)
    return Vocabulary(token_to_id=token_to_id)


@dataclass
class EncodedSequence:
    token_ids: np.ndarray  # (max_len,) int64
    segment_ids: np.ndarray  # (max_len,) int64, 0/1
    attention_mask: np.ndarray  # (max_len,) int64, 0/1

    @property
    def max_len(self) -> int:
        return int(self.token_ids.shape[0])


def encode_pair(
    question: str, answer: str, vocab: Vocabulary, max_len: int = DEFAULT_MAX_LEN
) -> EncodedSequence:
    """Compile a pair into the fixed layout; over-long questions are truncated
    from the right, the answer is never shortened."""
    if max_len < MIN_MAX_LEN:
        raise EncodingError(f"max_len must be >= {MIN_MAX_LEN}, got {max_len}")
    q_tokens = tokenize(question)
    a_tokens = tokenize(answer)
    budget = max_len - 3  # [CLS] and two [SEP]
    if len(a_tokens) > budget:
        raise EncodingError(
            f"answer occupies {len(a_tokens)} tokens but only {budget} fit at max_len={max_len}"
        )
    q_keep = min(len(q_tokens), budget - len(a_tokens))
    q_tokens = q_tokens[:q_keep]

    ids = np.zeros(max_len, dtype=np.int64)
    segments = np.zeros(max_len, dtype=np.int64)
    mask = np.zeros(max_len, dtype=np.int64)

    pos = 0
    ids[pos] = CLS
    pos += 1
    for tok in q_tokens:
        ids[pos] = vocab.id_of(tok)
        pos += 1
    ids[pos] = SEP
    pos += 1
    answer_start = pos
    for tok in a_tokens:
        ids[pos] = vocab.id_of(tok)
        pos += 1
    ids[pos] = SEP
    pos += 1

    segments[answer_start:pos] = 1
    mask[:pos] = 1
    return EncodedSequence(token_ids=ids, segment_ids=segments, attention_mask=mask)


def decode_pair(encoded: EncodedSequence, vocab: Vocabulary) -> tuple[list[str], list[str]]:
    """Recover (question tokens, answer tokens) from an encoded sequence."""
    id_to_token = {i: tok for tok, i in vocab.token_to_id.items()}
    length = int(encoded.attention_mask.sum())
    ids = encoded.token_ids[:length].tolist()
    if not ids or ids[0] != CLS:
        raise EncodingError("encoded sequence does not start with [CLS]")
    sep_positions = [i for i, tid in enumerate(ids) if tid == SEP]
    if len(sep_positions) != 2:
        raise EncodingError("encoded sequence must contain exactly two [SEP] tokens")
    first, second = sep_positions
    q = [id_to_token[t] for t in ids[1:first]]
    a = [id_to_token[t] for t in ids[first + 1 : second]]
    return q, a


@dataclass
class EncodedBatch:
    token_ids: np.ndarray  # (B, max_len)
    segment_ids: np.ndarray  # (B, max_len)
    attention_mask: np.ndarray  # (B, max_len)

    def __len__(self) -> int:
        return int(self.token_ids.shape[0])

    def take(self, indices: np.ndarray) -> "EncodedBatch":
        return EncodedBatch(
            token_ids=self.token_ids[indices],
            segment_ids=self.segment_ids[indices],
            attention_mask=self.attention_mask[indices],
        )


def stack_encoded(sequences: Sequence[EncodedSequence]) -> EncodedBatch:
    if not sequences:
        raise EncodingError("cannot stack an empty list of sequences")
    return EncodedBatch(
        token_ids=np.stack([s.token_ids for s in sequences]),
        segment_ids=np.stack([s.segment_ids for s in sequences]),
        attention_mask=np.stack([s.attention_mask for s in sequences]),
    )


def encode_pairs(
    pairs: Iterable[tuple[str, str]],
    vocab: Vocabulary,
    max_len: int = DEFAULT_MAX_LEN,
) -> EncodedBatch:
    return stack_encoded([encode_pair(q, a, vocab, max_len) for q, a in pairs])


def vocab_corpus(
    *token_sources: Iterable[str],
) -> list[list[str]]:
    """Tokenize raw text streams into the shape build_vocab expects."""
    corpus = []
    for source in token_sources:
        for text in source:
            corpus.append(tokenize(text))
    return corpus


def trimmed_length(encoded: EncodedSequence) -> int:
    return int(encoded.attention_mask.sum())


def truncation_report(question: str, answer: str, vocab: Vocabulary, max_len: int) -> Optional[int]:
    """Number of question tokens cut, or None when everything fits."""
    q, a = len(tokenize(question)), len(tokenize(answer))
    overflow = q + a - (max_len - 3)
    return overflow if overflow > 0 else None
