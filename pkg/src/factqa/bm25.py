"""BM25 retrieval baseline: candidate answers are scored by the summed
similarity of their top-K retrieved fact sentences.

Documents and queries are BM25-weighted term vectors compared by cosine
similarity (the classic Okapi relevance sum is available behind the
``scoring`` switch for sensitivity checks). The index keeps postings in CSR
layout so the per-query accumulation runs through the compiled kernel.
"""

import hashlib
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from factqa._kernels import accumulate_postings
from factqa.errors import LoadError, ParseError
from factqa.evaluate import predict_from_scores
from factqa.questions import MultipleChoiceQuestion
from factqa.text import tokenize


@dataclass(frozen=True)
class RetrievalConfig:
    top_k: int = 5
    k1: float = 1.2
    b: float = 0.75
    scoring: str = "cosine"  # or "okapi"

    def __post_init__(self):
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.scoring not in ("cosine", "okapi"):
            raise ValueError(f"unknown scoring mode {self.scoring!r}")

    @property
    def label(self) -> str:
        return f"IR BM25 (K = {self.top_k})"


@dataclass
class Bm25Index:
    term_to_id: dict[str, int]
    df: np.ndarray  # (n_terms,) int64
    idf: np.ndarray  # (n_terms,) float64
    doc_len: np.ndarray  # (n_docs,) int64
    avg_len: float
    indptr: np.ndarray  # (n_terms + 1,) int64, postings offsets per term
    post_docs: np.ndarray  # int64 doc ordinals
    post_weights: np.ndarray  # float64 BM25 document weights
    doc_norms: np.ndarray  # (n_docs,) float64
    sentences: list[str]
    fact_ids: list[str]
    k1: float
    b: float
    corpus_hash: str

    @property
    def n_docs(self) -> int:
        return len(self.sentences)


@dataclass(frozen=True)
class RetrievedSentence:
    ordinal: int
    fact_id: str
    sentence: str
    similarity: float


def _idf(n_docs: int, df: float) -> float:
    return math.log((n_docs - df + 0.5) / (df + 0.5) + 1.0)


def _bm25_weight(tf: float, idf: float, length: float, avg_len: float, k1: float, b: float) -> float:
    return idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * length / avg_len))


def corpus_hash(sentences: Sequence[str]) -> str:
    h = hashlib.sha256()
    for s in sentences:
        h.update(s.encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


def build_index(
    sentences_with_ids: Sequence[tuple[str, str]],
    k1: float = 1.2,
    b: float = 0.75,
) -> Bm25Index:
    """Index fact sentences given as (fact_id, sentence) pairs."""
    if not sentences_with_ids:
        raise ParseError("cannot build a BM25 index over an empty corpus")
    fact_ids = [fid for fid, _ in sentences_with_ids]
    sentences = [s for _, s in sentences_with_ids]
    docs = [tokenize(s) for s in sentences]
    n_docs = len(docs)
    doc_len = np.array([len(d) for d in docs], dtype=np.int64)
    avg_len = float(doc_len.mean())
    if avg_len <= 0:
        raise ParseError("BM25 corpus contains only empty sentences")

    terms = sorted({t for d in docs for t in d})
    term_to_id = {t: i for i, t in enumerate(terms)}
    df = np.zeros(len(terms), dtype=np.int64)
    per_term_postings: list[list[tuple[int, int]]] = [[] for _ in terms]
    for d_ord, tokens in enumerate(docs):
        for term, tf in Counter(tokens).items():
            tid = term_to_id[term]
            df[tid] += 1
            per_term_postings[tid].append((d_ord, tf))

    idf = np.array([_idf(n_docs, int(n)) for n in df], dtype=np.float64)
    indptr = np.zeros(len(terms) + 1, dtype=np.int64)
    docs_flat: list[int] = []
    weights_flat: list[float] = []
    norms_sq = np.zeros(n_docs, dtype=np.float64)
    for tid, postings in enumerate(per_term_postings):
        for d_ord, tf in postings:  # doc ordinals already ascending
            w = _bm25_weight(tf, idf[tid], doc_len[d_ord], avg_len, k1, b)
            docs_flat.append(d_ord)
            weights_flat.append(w)
            norms_sq[d_ord] += w * w
        indptr[tid + 1] = len(docs_flat)

    return Bm25Index(
        term_to_id=term_to_id,
        df=df,
        idf=idf,
        doc_len=doc_len,
        avg_len=avg_len,
        indptr=indptr,
        post_docs=np.array(docs_flat, dtype=np.int64),
        post_weights=np.array(weights_flat, dtype=np.float64),
        doc_norms=np.sqrt(norms_sq),
        sentences=sentences,
        fact_ids=fact_ids,
        k1=k1,
        b=b,
        corpus_hash=corpus_hash(sentences),
    )


def bm25_vector(text: str, index: Bm25Index) -> dict[str, float]:
    """Sparse BM25 term weights for a query; out-of-corpus terms keep the
    df=0 weight (they contribute to the query norm, never to a dot product)."""
    tokens = tokenize(text)
    if not tokens:
        return {}
    counts = Counter(tokens)
    qlen = len(tokens)
    vec = {}
    for term, tf in counts.items():
        tid = index.term_to_id.get(term)
        df = int(index.df[tid]) if tid is not None else 0
        vec[term] = _bm25_weight(
            tf, _idf(index.n_docs, df), qlen, index.avg_len, index.k1, index.b
        )
    return vec


def _query_arrays(text: str, index: Bm25Index) -> tuple[np.ndarray, np.ndarray, float, np.ndarray]:
    """(known term ids, their weights, query norm, term counts) for scoring."""
    vec = bm25_vector(text, index)
    qnorm = math.sqrt(sum(w * w for w in vec.values()))
    counts = Counter(tokenize(text))
    ids, weights, tfs = [], [], []
    for term, w in vec.items():
        tid = index.term_to_id.get(term)
        if tid is not None:
            ids.append(tid)
            weights.append(w)
            tfs.append(counts[term])
    return (
        np.array(ids, dtype=np.int64),
        np.array(weights, dtype=np.float64),
        qnorm,
        np.array(tfs, dtype=np.float64),
    )


def similarities(query: str, index: Bm25Index, scoring: str = "cosine") -> np.ndarray:
    """Score the query against every document.

    cosine: cosine between BM25-weighted query and document vectors.
    okapi: classic relevance sum (document weights added per query term).
    """
    ids, weights, qnorm, tfs = _query_arrays(query, index)
    scores = np.zeros(index.n_docs, dtype=np.float64)
    if len(ids) == 0:
        return scores
    if scoring == "cosine":
        accumulate_postings(
            scores, ids, weights, index.indptr, index.post_docs, index.post_weights
        )
        if qnorm <= 0:
            return np.zeros(index.n_docs, dtype=np.float64)
        denom = qnorm * index.doc_norms
        return np.divide(scores, denom, out=np.zeros_like(scores), where=denom > 0)
    accumulate_postings(scores, ids, tfs, index.indptr, index.post_docs, index.post_weights)
    return scores


def retrieve_topk(
    query: str, index: Bm25Index, k: int, scoring: str = "cosine"
) -> list[RetrievedSentence]:
    """Top-k sentences by similarity, descending, ties broken by lower ordinal."""
    sims = similarities(query, index, scoring)
    order = np.argsort(-sims, kind="stable")[:k]
    return [
        RetrievedSentence(
            ordinal=int(i),
            fact_id=index.fact_ids[int(i)],
            sentence=index.sentences[int(i)],
            similarity=float(sims[int(i)]),
        )
        for i in order
    ]


def ir_candidate_scores(
    question: MultipleChoiceQuestion, index: Bm25Index, cfg: RetrievalConfig
) -> list[float]:
    """Per-candidate score: sum of the top-K similarities for stem + candidate."""
    scores = []
    for candidate in question.candidates:
        query = f"{question.stem} {candidate}"
        hits = retrieve_topk(query, index, cfg.top_k, cfg.scoring)
        scores.append(sum(h.similarity for h in hits))
    return scores


def ir_answer(
    question: MultipleChoiceQuestion, index: Bm25Index, cfg: RetrievalConfig
) -> int:
    return predict_from_scores(ir_candidate_scores(question, index, cfg))


def save_index(index: Bm25Index, path: Path) -> None:
    """Binary cache; the corpus hash is stored and checked on load."""
    np.savez_compressed(
        path,
        terms=np.array(sorted(index.term_to_id, key=index.term_to_id.get), dtype=object),
        df=index.df,
        idf=index.idf,
        doc_len=index.doc_len,
        avg_len=np.array([index.avg_len]),
        indptr=index.indptr,
        post_docs=index.post_docs,
        post_weights=index.post_weights,
        doc_norms=index.doc_norms,
        sentences=np.array(index.sentences, dtype=object),
        fact_ids=np.array(index.fact_ids, dtype=object),
        params=np.array([index.k1, index.b]),
        corpus_hash=np.array([index.corpus_hash], dtype=object),
    )


def load_index(path: Path, expect_hash: Optional[str] = None) -> Bm25Index:
    path = Path(path)
    if not path.exists():
        raise LoadError(f"BM25 index cache not found: {path}")
    with np.load(path, allow_pickle=True) as data:
        stored_hash = str(data["corpus_hash"][0])
        if expect_hash is not None and stored_hash != expect_hash:
            raise LoadError(
                f"BM25 index cache {path} was built for a different corpus "
                f"({stored_hash[:12]} != {expect_hash[:12]})"
            )
        terms = [str(t) for t in data["terms"]]
        return Bm25Index(
            term_to_id={t: i for i, t in enumerate(terms)},
            df=data["df"],
            idf=data["idf"],
            doc_len=data["doc_len"],
            avg_len=float(data["avg_len"][0]),
            indptr=data["indptr"],
            post_docs=data["post_docs"],
            post_weights=data["post_weights"],
            doc_norms=data["doc_norms"],
            sentences=[str(s) for s in data["sentences"]],
            fact_ids=[str(f) for f in data["fact_ids"]],
            k1=float(data["params"][0]),
            b=float(data["params"][1]),
            corpus_hash=stored_hash,
        )
