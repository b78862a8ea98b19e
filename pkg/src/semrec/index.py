"""Dense retrieval: exact (flat) search and an HNSW approximate index.

Both return (item_id, score) with score = inner product, so on unit vectors
higher is more similar.  The flat scan is the recall oracle; HNSW trades a
little recall for a large speedup via a navigable small-world graph.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import binio
from ._kernels import build_graph, search_graph
from .encoder import EmbeddingMatrix, read_embeddings_block, write_embeddings_block
from .errors import DimMismatch, EmptyIndex, ShapeMismatch, VersionMismatch

_MAGIC = b"HNS1"
_VERSION = 1
_MAX_LEVEL = 30


@dataclass
class FlatIndex:
    ids: list[str]
    vectors: np.ndarray  # float32 [N, d]


def build_flat(embs: EmbeddingMatrix) -> FlatIndex:
    return FlatIndex(ids=list(embs.ids), vectors=np.ascontiguousarray(embs.vectors, dtype=np.float32))


def flat_search(index: FlatIndex, query: np.ndarray, k: int) -> list[tuple[str, float]]:
    """Exact top-k by inner product; ties broken by ascending item id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    n = index.vectors.shape[0]
    if n == 0:
        raise EmptyIndex("flat index holds no vectors")
    if query.shape != (index.vectors.shape[1],):
        raise DimMismatch(f"query shape {query.shape} vs index dim {index.vectors.shape[1]}")
    scores = index.vectors @ query.astype(np.float32)
    k_eff = min(k, n)
    if k_eff < n:
        part = np.argpartition(-scores, k_eff)[:k_eff]
    else:
        part = np.arange(n)
    ranked = sorted(part.tolist(), key=lambda i: (-scores[i], index.ids[i]))
    return [(index.ids[i], float(scores[i])) for i in ranked]


@dataclass
class HnswParams:
    m: int = 32
    ef_construction: int = 40
    ef_search: int = 16
    max_level_cap: int = _MAX_LEVEL
    seed: int = 42

    def __post_init__(self) -> None:
        if self.m < 2:
            raise ValueError("m must be >= 2")
        if self.ef_construction < self.m:
            raise ValueError("ef_construction must be >= m")
        if self.ef_search < 1:
            raise ValueError("ef_search must be >= 1")

    @property
    def level_mult(self) -> float:
        return 1.0 / math.log(self.m)


@dataclass
class HnswIndex:
    params: HnswParams
    ids: list[str]
    vectors: np.ndarray       # float32 [N, d]
    node_levels: np.ndarray   # int32 [N]
    offsets: np.ndarray       # int64 [N], start of each node's slot block
    cnt: np.ndarray           # int32 [N, max_level+1]
    adj: np.ndarray           # int32 [total_slots]
    entry: int
    max_level: int

    @property
    def n(self) -> int:
        return len(self.ids)


def assign_levels(n: int, params: HnswParams) -> np.ndarray:
    """Geometric level draws, one per node in insertion order."""
    rng = np.random.default_rng(params.seed)
    u = rng.random(n)
    levels = np.floor(-np.log1p(-u) * params.level_mult)
    return np.clip(levels, 0, params.max_level_cap).astype(np.int32)


def _layout(node_levels: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = node_levels.shape[0]
    blocks = 2 * m + m * node_levels.astype(np.int64)
    offsets = np.zeros(n, dtype=np.int64)
    if n > 1:
        offsets[1:] = np.cumsum(blocks[:-1])
    total = int(blocks.sum())
    top = int(node_levels.max()) if n else 0
    cnt = np.zeros((n, top + 1), dtype=np.int32)
    adj = np.full(total, -1, dtype=np.int32)
    return offsets, cnt, adj


def hnsw_build(embs: EmbeddingMatrix, params: HnswParams | None = None) -> HnswIndex:
    params = params or HnswParams()
    n = len(embs.ids)
    vectors = np.ascontiguousarray(embs.vectors, dtype=np.float32)
    node_levels = assign_levels(n, params)
    if n == 0:
        return HnswIndex(
            params=params, ids=[], vectors=vectors.reshape(0, vectors.shape[1] if vectors.ndim == 2 else 0),
            node_levels=node_levels, offsets=np.zeros(0, np.int64),
            cnt=np.zeros((0, 1), np.int32), adj=np.zeros(0, np.int32),
            entry=-1, max_level=-1,
        )
    offsets, cnt, adj = _layout(node_levels, params.m)
    entry, max_level = build_graph(
        vectors, node_levels, offsets, cnt, adj, params.m, params.ef_construction
    )
    return HnswIndex(
        params=params, ids=list(embs.ids), vectors=vectors,
        node_levels=node_levels, offsets=offsets, cnt=cnt, adj=adj,
        entry=int(entry), max_level=int(max_level),
    )


def hnsw_search(
    index: HnswIndex, query: np.ndarray, k: int, ef_search: int | None = None
) -> list[tuple[str, float]]:
    """Approximate top-k; the level-0 beam width is max(ef_search, k)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if index.n == 0:
        raise EmptyIndex("HNSW index holds no vectors")
    if query.shape != (index.vectors.shape[1],):
        raise DimMismatch(f"query shape {query.shape} vs index dim {index.vectors.shape[1]}")
    ef = index.params.ef_search if ef_search is None else ef_search
    if ef < k:
        warnings.warn(f"ef_search={ef} below k={k}; clamping the beam to k", stacklevel=2)
    ids, dists = search_graph(
        index.vectors, index.offsets, index.cnt, index.adj, index.params.m,
        index.entry, index.max_level, query.astype(np.float32), k, ef,
    )
    return [(index.ids[i], 1.0 - float(d)) for i, d in zip(ids, dists)]


def save_hnsw(index: HnswIndex, path: str | Path) -> None:
    """Layout: magic, version, params, N, dim, entry point, level table,
    adjacency (varint-prefixed lists, sorted and delta-coded), then the
    vectors as an embedded EMB1 block.  Sorting on write makes saving
    stable: save(load(save(x))) reproduces the same bytes."""
    with open(path, "wb") as f:
        f.write(_MAGIC)
        binio.write_u16(f, _VERSION)
        binio.write_u32(f, index.params.m)
        binio.write_u32(f, index.params.ef_construction)
        binio.write_u32(f, index.params.ef_search)
        binio.write_u64(f, index.params.seed)
        binio.write_u32(f, index.n)
        binio.write_u32(f, index.vectors.shape[1] if index.vectors.ndim == 2 else 0)
        binio.write_i64(f, index.entry)
        binio.write_array(f, index.node_levels, "<i4")
        m = index.params.m
        for i in range(index.n):
            for level in range(int(index.node_levels[i]) + 1):
                base = index.offsets[i] + (0 if level == 0 else 2 * m + m * (level - 1))
                c = int(index.cnt[i, level])
                neighbors = sorted(int(x) for x in index.adj[base:base + c])
                binio.write_varint(f, c)
                prev = 0
                for nb in neighbors:
                    binio.write_varint(f, nb - prev)
                    prev = nb
        write_embeddings_block(f, EmbeddingMatrix(ids=index.ids, vectors=index.vectors))


def load_hnsw(path: str | Path) -> HnswIndex:
    with open(path, "rb") as f:
        binio.read_magic(f, _MAGIC)
        version = binio.read_u16(f)
        if version != _VERSION:
            raise VersionMismatch(f"unsupported HNS1 version {version}")
        params = HnswParams(
            m=binio.read_u32(f),
            ef_construction=binio.read_u32(f),
            ef_search=binio.read_u32(f),
            seed=binio.read_u64(f),
        )
        n = binio.read_u32(f)
        d = binio.read_u32(f)
        entry = binio.read_i64(f)
        node_levels = binio.read_array(f, "<i4", (n,))
        if n == 0:
            embs = read_embeddings_block(f)
            return HnswIndex(
                params=params, ids=embs.ids,
                vectors=embs.vectors.reshape(0, d),
                node_levels=node_levels, offsets=np.zeros(0, np.int64),
                cnt=np.zeros((0, 1), np.int32), adj=np.zeros(0, np.int32),
                entry=int(entry), max_level=-1,
            )
        offsets, cnt, adj = _layout(node_levels, params.m)
        m = params.m
        for i in range(n):
            for level in range(int(node_levels[i]) + 1):
                base = offsets[i] + (0 if level == 0 else 2 * m + m * (level - 1))
                c = binio.read_varint(f)
                prev = 0
                for t in range(c):
                    prev += binio.read_varint(f)
                    adj[base + t] = prev
                cnt[i, level] = c
        embs = read_embeddings_block(f)
    if len(embs.ids) != n or embs.vectors.shape != (n, d):
        raise ShapeMismatch("vector block does not match the index header")
    return HnswIndex(
        params=params, ids=embs.ids,
        vectors=np.ascontiguousarray(embs.vectors, dtype=np.float32),
        node_levels=node_levels, offsets=offsets, cnt=cnt, adj=adj,
        entry=int(entry), max_level=int(node_levels.max()),
    )
