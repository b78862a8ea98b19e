"""End-to-end retrieval: encode, search (dense / sparse / hybrid), enrich,
filter, rank.  Hybrid fusion min-max normalizes each system's scores per
query and mixes them with a single weight.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .encoder import EncoderModel, encode
from .errors import ArtifactsMissing, EmptySequence, UnknownField
from .index import FlatIndex, HnswIndex, flat_search, hnsw_search
from .quant import QuantizedModel, encode_q
from .sparse import Bm25Index, bm25_topk
from .store import DisplayRecord, MetadataCache, lookup
from .textproc import tokenize

MODES = ("dense", "sparse", "hybrid")
ENGINES = ("flat", "hnsw")
_EQ_FILTER_FIELDS = ("brand", "title", "item_id")
_RANGE_FILTER_FIELDS = ("price_min", "price_max")
CANDIDATE_MULTIPLIER = 4


@dataclass
class RetrievalRequest:
    query: str
    k: int = 10
    mode: str = "hybrid"
    fusion_weight: float = 0.5   # weight on the dense side
    filters: dict[str, object] = field(default_factory=dict)
    engine: str = "hnsw"
    ef_search: int | None = None

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}, got {self.engine!r}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0.0 <= self.fusion_weight <= 1.0:
            raise ValueError("fusion_weight must be in [0, 1]")


@dataclass
class RankedResult:
    rank: int
    item_id: str
    score: float
    source_scores: dict[str, float]
    record: DisplayRecord | None


@dataclass
class StageTimings:
    encode_ns: int
    search_ns: int
    lookup_ns: int

    @property
    def total_ns(self) -> int:
        return self.encode_ns + self.search_ns + self.lookup_ns


@dataclass
class SearchSystem:
    model: EncoderModel | QuantizedModel | None = None
    flat: FlatIndex | None = None
    hnsw: HnswIndex | None = None
    bm25: Bm25Index | None = None
    cache: MetadataCache | None = None

    def encode_query(self, text: str) -> np.ndarray:
        if self.model is None:
            raise ArtifactsMissing("no encoder model loaded")
        if isinstance(self.model, QuantizedModel):
            return encode_q(self.model, text)
        return encode(self.model, text)

    def dense_topk(
        self, query_vec: np.ndarray, k: int, engine: str, ef_search: int | None = None
    ) -> list[tuple[str, float]]:
        if engine == "hnsw":
            if self.hnsw is None:
                raise ArtifactsMissing("no HNSW index loaded")
            return hnsw_search(self.hnsw, query_vec, k, ef_search)
        if self.flat is None:
            raise ArtifactsMissing("no flat index loaded")
        return flat_search(self.flat, query_vec, k)

    def sparse_topk(self, tokens: list[str], k: int) -> list[tuple[str, float]]:
        if self.bm25 is None:
            raise ArtifactsMissing("no BM25 index loaded")
        return bm25_topk(self.bm25, tokens, k)


def _minmax(scores: dict[str, float]) -> dict[str, float]:
    if not scores:
        return {}
    lo = min(scores.values())
    hi = max(scores.values())
    if hi - lo < 1e-12:
        return {i: 0.5 for i in scores}
    return {i: (s - lo) / (hi - lo) for i, s in scores.items()}


def fuse_scores(
    dense: list[tuple[str, float]],
    sparse: list[tuple[str, float]],
    weight: float = 0.5,
) -> list[tuple[str, float]]:
    """Weighted sum of per-query min-max normalized scores over the union of
    candidates.  An item one system did not return takes that system's
    normalized minimum (0.0).  Ties break by ascending item id.
    """
    if not 0.0 <= weight <= 1.0:
        raise ValueError("weight must be in [0, 1]")
    d_norm = _minmax(dict(dense))
    s_norm = _minmax(dict(sparse))
    fused = {
        item: weight * d_norm.get(item, 0.0) + (1.0 - weight) * s_norm.get(item, 0.0)
        for item in set(d_norm) | set(s_norm)
    }
    return sorted(fused.items(), key=lambda t: (-t[1], t[0]))


def apply_filters(
    ranked: list[tuple[str, float, DisplayRecord | None]],
    filters: dict[str, object],
) -> list[tuple[str, float, DisplayRecord | None]]:
    """Keep results matching every filter; items missing a filtered field are
    dropped.  String matches are case-insensitive equality."""
    for name in filters:
        if name not in _EQ_FILTER_FIELDS and name not in _RANGE_FILTER_FIELDS:
            raise UnknownField(f"unsupported filter field {name!r}")
    if not filters:
        return ranked
    out = []
    for item_id, score, rec in ranked:
        if rec is None:
            continue
        ok = True
        for name, value in filters.items():
            if name in _EQ_FILTER_FIELDS:
                actual = getattr(rec, name)
                if actual is None or str(actual).lower() != str(value).lower():
                    ok = False
                    break
            else:
                if rec.price is None:
                    ok = False
                    break
                bound = float(value)  # type: ignore[arg-type]
                if name == "price_min" and rec.price < bound:
                    ok = False
                    break
                if name == "price_max" and rec.price > bound:
                    ok = False
                    break
        if ok:
            out.append((item_id, score, rec))
    return out


def retrieve_timed(
    system: SearchSystem, req: RetrievalRequest
) -> tuple[list[RankedResult], StageTimings]:
    """Run the full pipeline and time its three stages separately."""
    if system.cache is None:
        raise ArtifactsMissing("no metadata cache loaded")
    t0 = time.perf_counter_ns()
    query_vec = None
    tokens: list[str] | None = None
    if req.mode in ("dense", "hybrid"):
        query_vec = system.encode_query(req.query)
    if req.mode in ("sparse", "hybrid"):
        tokens = tokenize(req.query)
        if req.mode == "sparse" and not tokens:
            raise EmptySequence(f"query has no tokens: {req.query!r}")
    t1 = time.perf_counter_ns()

    dense_raw: dict[str, float] = {}
    sparse_raw: dict[str, float] = {}
    if req.mode == "dense":
        part = system.dense_topk(query_vec, req.k, req.engine, req.ef_search)
        dense_raw = dict(part)
        candidates = part
    elif req.mode == "sparse":
        part = system.sparse_topk(tokens, req.k)
        sparse_raw = dict(part)
        candidates = part
    else:
        fetch = req.k * CANDIDATE_MULTIPLIER
        dense_part = system.dense_topk(query_vec, fetch, req.engine, req.ef_search)
        sparse_part = system.sparse_topk(tokens, fetch) if tokens else []
        dense_raw = dict(dense_part)
        sparse_raw = dict(sparse_part)
        candidates = fuse_scores(dense_part, sparse_part, req.fusion_weight)
    t2 = time.perf_counter_ns()

    if not req.filters:
        candidates = candidates[: req.k]
    enriched = [(item, score, lookup(system.cache, item)) for item, score in candidates]
    kept = apply_filters(enriched, req.filters)[: req.k]
    results = []
    for r, (item, score, rec) in enumerate(kept):
        sources = {}
        if item in dense_raw:
            sources["dense"] = dense_raw[item]
        if item in sparse_raw:
            sources["sparse"] = sparse_raw[item]
        results.append(
            RankedResult(rank=r + 1, item_id=item, score=score, source_scores=sources, record=rec)
        )
    t3 = time.perf_counter_ns()
    return results, StageTimings(encode_ns=t1 - t0, search_ns=t2 - t1, lookup_ns=t3 - t2)


def retrieve(system: SearchSystem, req: RetrievalRequest) -> list[RankedResult]:
    return retrieve_timed(system, req)[0]
