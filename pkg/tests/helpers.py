"""Shared test oracles and builders.

The BM25 oracle is an independent from-the-formula implementation (plain
dicts, no shared code with the indexed path). The gradient checker compares
analytic gradients against central finite differences of the forward-only
loss.
"""

import math
from collections import Counter

import numpy as np

from factqa.encoding import EncodedBatch
from factqa.model import ModelParams, compute_loss
from factqa.text import tokenize


class OracleBm25:
    """Brute-force BM25 cosine scoring straight from the definitions."""

    def __init__(self, sentences, k1=1.2, b=0.75):
        self.docs = [tokenize(s) for s in sentences]
        self.n = len(self.docs)
        self.avg = sum(len(d) for d in self.docs) / self.n
        self.k1, self.b = k1, b
        self.df = Counter()
        for d in self.docs:
            for t in set(d):
                self.df[t] += 1

    def idf(self, term):
        df = self.df.get(term, 0)
        return math.log((self.n - df + 0.5) / (df + 0.5) + 1.0)

    def weight(self, tf, term, length):
        return (
            self.idf(term)
            * tf
            * (self.k1 + 1.0)
            / (tf + self.k1 * (1.0 - self.b + self.b * length / self.avg))
        )

    def vector(self, tokens):
        counts = Counter(tokens)
        return {t: self.weight(c, t, len(tokens)) for t, c in counts.items()}

    def similarities(self, query):
        q = self.vector(tokenize(query))
        qn = math.sqrt(sum(w * w for w in q.values()))
        sims = []
        for d_tokens in self.docs:
            d = self.vector(d_tokens)
            dn = math.sqrt(sum(w * w for w in d.values()))
            dot = sum(w * d[t] for t, w in q.items() if t in d)
            sims.append(dot / (qn * dn) if qn > 0 and dn > 0 else 0.0)
        return sims

    def topk(self, query, k):
        sims = self.similarities(query)
        order = sorted(range(self.n), key=lambda i: (-sims[i], i))
        return [(i, sims[i]) for i in order[:k]]

    def answer(self, question, k):
        best, best_score = 0, -math.inf
        for i, cand in enumerate(question.candidates):
            hits = self.topk(f"{question.stem} {cand}", k)
            score = sum(s for _, s in hits)
            if score > best_score:
                best, best_score = i, score
        return best


def random_encoded_batch(rng, batch_size, seq_len, vocab_size):
    """Well-formed random sequences: [CLS] ... [SEP] ... [SEP] [PAD]*."""
    ids = rng.integers(4, vocab_size, size=(batch_size, seq_len)).astype(np.int64)
    segs = np.zeros((batch_size, seq_len), dtype=np.int64)
    attn = np.zeros((batch_size, seq_len), dtype=np.int64)
    for i in range(batch_size):
        length = int(rng.integers(5, seq_len + 1))
        mid = int(rng.integers(1, length - 1))
        ids[i, 0] = 2
        ids[i, mid] = 3
        ids[i, length - 1] = 3
        ids[i, length:] = 0
        segs[i, mid + 1 : length] = 1
        attn[i, :length] = 1
    return EncodedBatch(token_ids=ids, segment_ids=segs, attention_mask=attn)


def gradient_max_rel_error(
    params: ModelParams,
    batch: EncodedBatch,
    labels: np.ndarray,
    grads: dict[str, np.ndarray],
    eps: float = 1e-4,
    denom_floor: float = 1e-6,
) -> float:
    """Worst guarded relative error between analytic and central-difference
    gradients over every parameter.

    rel = |g_a - g_fd| / max(|g_a|, |g_fd|, denom_floor); the floor reflects
    the O(eps^2) noise of the finite-difference probe itself, below which the
    comparison is effectively absolute.
    """
    worst = 0.0
    for name, arr in params.tensors.items():
        g = grads[name]
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lp = compute_loss(params, batch, labels)
            flat[i] = orig - eps
            lm = compute_loss(params, batch, labels)
            flat[i] = orig
            fd = (lp - lm) / (2.0 * eps)
            rel = abs(gflat[i] - fd) / max(abs(gflat[i]), abs(fd), denom_floor)
            worst = max(worst, rel)
    return worst
