"""BM25 inverted index: build, score, top-k, and binary serialization.

Scoring uses the non-negative smoothed idf ln(1 + (N - df + 0.5)/(df + 0.5))
with defaults k1=1.2, b=0.75.  Query terms are treated as a bag: a token
appearing twice in the query contributes twice.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from . import binio
from .errors import DuplicateDoc, EmptyCorpus, UnknownDoc, VersionMismatch
from .textproc import TokenSeq, tokenize

_MAGIC = b"BM25"
_VERSION = 1


@dataclass
class Bm25Params:
    k1: float = 1.2
    b: float = 0.75

    def __post_init__(self) -> None:
        if self.k1 <= 0:
            raise ValueError("k1 must be positive")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError("b must be in [0, 1]")


@dataclass
class Bm25Index:
    params: Bm25Params
    doc_ids: list[str]
    doc_lens: list[int]
    # term -> [(doc_ordinal, tf)] with ordinals strictly ascending
    postings: dict[str, list[tuple[int, int]]]
    avgdl: float = field(init=False)
    _ord: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        n = len(self.doc_lens)
        self.avgdl = (sum(self.doc_lens) / n) if n else 0.0
        self._ord = {doc_id: i for i, doc_id in enumerate(self.doc_ids)}

    @property
    def n_docs(self) -> int:
        return len(self.doc_ids)

    def df(self, term: str) -> int:
        return len(self.postings.get(term, ()))


def _as_tokens(text) -> list[str]:
    if isinstance(text, TokenSeq):
        return text.tokens
    if isinstance(text, str):
        return tokenize(text)
    return list(text)


def build_bm25(corpus: list[tuple[str, object]], params: Bm25Params | None = None) -> Bm25Index:
    """Index (item_id, text) documents; text may be a TokenSeq, a raw string
    (tokenized here), or a plain token list."""
    if not corpus:
        raise EmptyCorpus("cannot build an index over zero documents")
    params = params or Bm25Params()

    seen: set[str] = set()
    doc_ids: list[str] = []
    doc_lens: list[int] = []
    postings: dict[str, list[tuple[int, int]]] = {}
    for idx, (item_id, text) in enumerate(corpus):
        if item_id in seen:
            raise DuplicateDoc(f"duplicate document id {item_id!r}")
        seen.add(item_id)
        doc_ids.append(item_id)
        tokens = _as_tokens(text)
        doc_lens.append(len(tokens))
        tf: dict[str, int] = {}
        for t in tokens:
            tf[t] = tf.get(t, 0) + 1
        for term, count in tf.items():
            postings.setdefault(term, []).append((idx, count))
    return Bm25Index(params=params, doc_ids=doc_ids, doc_lens=doc_lens, postings=postings)


def idf(index: Bm25Index, term: str) -> float:
    """ln(1 + (N - df + 0.5) / (df + 0.5)); strictly positive, df=0 for unseen."""
    df = index.df(term)
    n = index.n_docs
    return math.log(1.0 + (n - df + 0.5) / (df + 0.5))


def _tf_weight(index: Bm25Index, tf: int, doc_len: int) -> float:
    p = index.params
    rel_len = doc_len / index.avgdl if index.avgdl > 0 else 0.0
    return tf * (p.k1 + 1.0) / (tf + p.k1 * (1.0 - p.b + p.b * rel_len))


def bm25_score(index: Bm25Index, query, doc_id: str) -> float:
    """Score one document (by id) against a query; terms absent from the
    document contribute nothing."""
    ordinal = index._ord.get(doc_id)
    if ordinal is None:
        raise UnknownDoc(f"document {doc_id!r} is not in the index")
    score = 0.0
    for term in _as_tokens(query):
        tf = 0
        for d, count in index.postings.get(term, ()):
            if d == ordinal:
                tf = count
                break
        if tf:
            score += idf(index, term) * _tf_weight(index, tf, index.doc_lens[ordinal])
    return score


def bm25_topk(index: Bm25Index, query, k: int) -> list[tuple[str, float]]:
    """Top-k (item_id, score), score descending, ties broken by ascending id.

    Documents sharing no terms with the query are never returned; a query
    made entirely of unseen terms yields an empty list.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    acc: dict[int, float] = {}
    for term in _as_tokens(query):
        plist = index.postings.get(term)
        if not plist:
            continue
        w = idf(index, term)
        for ordinal, tf in plist:
            acc[ordinal] = acc.get(ordinal, 0.0) + w * _tf_weight(
                index, tf, index.doc_lens[ordinal]
            )
    ranked = sorted(acc.items(), key=lambda t: (-t[1], index.doc_ids[t[0]]))
    return [(index.doc_ids[d], s) for d, s in ranked[:k]]


def save_bm25(index: Bm25Index, path: str | Path) -> None:
    with open(path, "wb") as f:
        f.write(_MAGIC)
        binio.write_u16(f, _VERSION)
        binio.write_f64(f, index.params.k1)
        binio.write_f64(f, index.params.b)
        binio.write_u32(f, index.n_docs)
        for item_id, doc_len in zip(index.doc_ids, index.doc_lens):
            binio.write_str(f, item_id)
            binio.write_u32(f, doc_len)
        binio.write_u32(f, len(index.postings))
        for term in sorted(index.postings):
            plist = index.postings[term]
            binio.write_str(f, term)
            binio.write_u32(f, len(plist))
            prev = 0
            for ordinal, tf in plist:
                binio.write_varint(f, ordinal - prev)
                binio.write_varint(f, tf)
                prev = ordinal


def load_bm25(path: str | Path) -> Bm25Index:
    with open(path, "rb") as f:
        binio.read_magic(f, _MAGIC)
        version = binio.read_u16(f)
        if version != _VERSION:
            raise VersionMismatch(f"unsupported BM25 version {version}")
        k1 = binio.read_f64(f)
        b = binio.read_f64(f)
        n_docs = binio.read_u32(f)
        doc_ids = []
        doc_lens = []
        for _ in range(n_docs):
            doc_ids.append(binio.read_str(f))
            doc_lens.append(binio.read_u32(f))
        postings: dict[str, list[tuple[int, int]]] = {}
        n_terms = binio.read_u32(f)
        for _ in range(n_terms):
            term = binio.read_str(f)
            df = binio.read_u32(f)
            plist = []
            prev = 0
            for _ in range(df):
                prev += binio.read_varint(f)
                tf = binio.read_varint(f)
                plist.append((prev, tf))
            postings[term] = plist
    return Bm25Index(
        params=Bm25Params(k1=k1, b=b),
        doc_ids=doc_ids,
        doc_lens=doc_lens,
        postings=postings,
    )
