"""Shared-tower text encoder: hashed token embeddings, masked mean pooling,
a linear projection, and L2 normalization, plus the model (ENC1) and corpus
embedding (EMB1) binary formats.

Both towers are the same model: queries and documents go through identical
weights, so training updates one parameter set.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import binio
from .errors import (
    AllMasked,
    DuplicateKey,
    EmptySequence,
    NonFinite,
    NonFiniteWeights,
    NonNormalizedRows,
    NotNormalized,
    ShapeMismatch,
    VersionMismatch,
    ZeroVector,
)
from .textproc import MAX_SEQ_LEN, tokenize, truncate_tokens

_ENC_MAGIC = b"ENC1"
_EMB_MAGIC = b"EMB1"
_VERSION = 1

DEFAULT_HASH_BUCKETS = 1 << 15
DEFAULT_DIM = 64
UNIT_TOL = 1e-5      # tolerance on ||v|| = 1 for freshly computed vectors
STORED_TOL = 1e-3    # looser bound for vectors that round-tripped through f32


@dataclass
class EncoderModel:
    emb: np.ndarray    # [hash_buckets, d_in]
    proj: np.ndarray   # [d_in, d_out]
    seed: int
    _hash_cache: dict[str, int] = field(default_factory=dict, repr=False)

    @property
    def hash_buckets(self) -> int:
        return self.emb.shape[0]

    @property
    def d_in(self) -> int:
        return self.emb.shape[1]

    @property
    def d_out(self) -> int:
        return self.proj.shape[1]

    def bucket(self, token: str) -> int:
        """Deterministic token -> row index, keyed by the model seed."""
        b = self._hash_cache.get(token)
        if b is None:
            digest = hashlib.blake2b(
                token.encode("utf-8"),
                digest_size=8,
                key=self.seed.to_bytes(8, "little"),
            ).digest()
            b = int.from_bytes(digest, "little") % self.hash_buckets
            self._hash_cache[token] = b
        return b

    def astype(self, dtype) -> "EncoderModel":
        return EncoderModel(
            emb=self.emb.astype(dtype), proj=self.proj.astype(dtype), seed=self.seed
        )


def new_model(
    seed: int = 42,
    hash_buckets: int = DEFAULT_HASH_BUCKETS,
    d_in: int = DEFAULT_DIM,
    d_out: int = DEFAULT_DIM,
    dtype=np.float64,
) -> EncoderModel:
    """Fresh model: small uniform embeddings, near-identity projection.

    Untrained encodings are already meaningful (bag-of-hashed-words cosine),
    which is what the zero-shot comparison rows rely on.
    """
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(d_in)
    emb = rng.uniform(-bound, bound, size=(hash_buckets, d_in)).astype(dtype)
    proj = np.eye(d_in, d_out, dtype=dtype)
    proj += 0.01 * rng.uniform(-1.0, 1.0, size=(d_in, d_out)).astype(dtype)
    return EncoderModel(emb=emb, proj=proj, seed=seed)


def embed_tokens(model: EncoderModel, tokens) -> tuple[np.ndarray, np.ndarray]:
    """Token sequence -> ([T, d_in] embedding rows, all-ones attention mask)."""
    tokens = list(tokens)
    if not tokens:
        raise EmptySequence("no tokens to embed")
    idx = np.fromiter((model.bucket(t) for t in tokens), dtype=np.int64, count=len(tokens))
    return model.emb[idx], np.ones(len(tokens), dtype=model.emb.dtype)


def mean_pool(mat: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Mask-weighted average of [T, d] rows: sum(a_t * h_t) / sum(a_t)."""
    if mat.ndim != 2 or mat.shape[0] == 0:
        raise EmptySequence("mean_pool needs a non-empty [T, d] matrix")
    if mask is None:
        return mat.mean(axis=0)
    mask = np.asarray(mask, dtype=mat.dtype)
    if mask.shape != (mat.shape[0],):
        raise ShapeMismatch(f"mask shape {mask.shape} vs {mat.shape[0]} rows")
    total = mask.sum()
    if total <= 0:
        raise AllMasked("attention mask zeroes out every token")
    return (mat * mask[:, None]).sum(axis=0) / total


def l2_normalize(v: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    norm = float(np.linalg.norm(v))
    if norm <= eps:
        raise ZeroVector("cannot normalize a zero vector")
    return v / norm


def encode_tokens(model: EncoderModel, tokens: list[str]) -> np.ndarray:
    """tokens -> pooled -> projected -> unit vector of size d_out."""
    h, mask = embed_tokens(model, tokens)
    return l2_normalize(mean_pool(h, mask) @ model.proj)


def encode(model: EncoderModel, text: str, max_len: int = MAX_SEQ_LEN) -> np.ndarray:
    seq = truncate_tokens(tokenize(text), max_len)
    if not seq.tokens:
        raise EmptySequence(f"text has no tokens: {text!r}")
    return encode_tokens(model, seq.tokens)


def encode_batch(model: EncoderModel, texts: list[str], max_len: int = MAX_SEQ_LEN) -> np.ndarray:
    if not texts:
        return np.zeros((0, model.d_out), dtype=model.emb.dtype)
    return np.stack([encode(model, t, max_len) for t in texts])


def similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two unit vectors (their dot product)."""
    for name, v in (("a", a), ("b", b)):
        tol = UNIT_TOL if v.dtype == np.float64 else STORED_TOL
        if abs(float(np.linalg.norm(v)) - 1.0) > tol:
            raise NotNormalized(f"vector {name} is not unit length")
    return float(np.dot(a, b))


def write_model(f, model: EncoderModel) -> None:
    if not (np.isfinite(model.emb).all() and np.isfinite(model.proj).all()):
        raise NonFiniteWeights("model weights contain NaN or inf")
    f.write(_ENC_MAGIC)
    binio.write_u16(f, _VERSION)
    binio.write_u32(f, model.hash_buckets)
    binio.write_u32(f, model.d_in)
    binio.write_u32(f, model.d_out)
    binio.write_u64(f, model.seed)
    binio.write_array(f, model.emb, "<f4")
    binio.write_array(f, model.proj, "<f4")


def read_model(f) -> EncoderModel:
    binio.read_magic(f, _ENC_MAGIC)
    version = binio.read_u16(f)
    if version != _VERSION:
        raise VersionMismatch(f"unsupported ENC1 version {version}")
    buckets = binio.read_u32(f)
    d_in = binio.read_u32(f)
    d_out = binio.read_u32(f)
    seed = binio.read_u64(f)
    emb = binio.read_array(f, "<f4", (buckets, d_in))
    proj = binio.read_array(f, "<f4", (d_in, d_out))
    if not (np.isfinite(emb).all() and np.isfinite(proj).all()):
        raise NonFiniteWeights("stored model weights contain NaN or inf")
    return EncoderModel(emb=emb, proj=proj, seed=seed)


def save_model(model: EncoderModel, path: str | Path) -> None:
    with open(path, "wb") as f:
        write_model(f, model)


def load_model(path: str | Path) -> EncoderModel:
    with open(path, "rb") as f:
        return read_model(f)


@dataclass
class EmbeddingMatrix:
    ids: list[str]
    vectors: np.ndarray  # [N, d], rows unit length

    def __post_init__(self) -> None:
        if self.vectors.ndim != 2 or len(self.ids) != self.vectors.shape[0]:
            raise ShapeMismatch(
                f"{len(self.ids)} ids vs vector shape {self.vectors.shape}"
            )
        if len(set(self.ids)) != len(self.ids):
            raise DuplicateKey("embedding ids are not unique")
        if self.vectors.shape[0]:
            if not np.isfinite(self.vectors).all():
                raise NonFinite("embedding matrix contains NaN or inf")
            norms = np.linalg.norm(self.vectors, axis=1)
            bad = np.abs(norms - 1.0) > STORED_TOL
            if bad.any():
                raise NonNormalizedRows(f"{int(bad.sum())} rows are not unit length")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def write_embeddings_block(f, embs: EmbeddingMatrix) -> None:
    """EMB1 block: magic, version, normalized flag, dim, count, then one
    (length-prefixed id, row of little-endian f32) record per vector."""
    f.write(_EMB_MAGIC)
    binio.write_u16(f, _VERSION)
    binio.write_u8(f, 1)
    binio.write_u32(f, embs.vectors.shape[1])
    binio.write_u64(f, len(embs.ids))
    rows = np.ascontiguousarray(embs.vectors, dtype="<f4")
    for i, item_id in enumerate(embs.ids):
        binio.write_str(f, item_id)
        f.write(rows[i].tobytes())


def read_embeddings_block(f) -> EmbeddingMatrix:
    binio.read_magic(f, _EMB_MAGIC)
    version = binio.read_u16(f)
    if version != _VERSION:
        raise VersionMismatch(f"unsupported EMB1 version {version}")
    normalized = binio.read_u8(f)
    d = binio.read_u32(f)
    n = binio.read_u64(f)
    ids = []
    vectors = np.empty((n, d), dtype=np.float32)
    for i in range(n):
        ids.append(binio.read_str(f))
        vectors[i] = binio.read_array(f, "<f4", (d,))
    if not normalized and n:
        norms = np.linalg.norm(vectors, axis=1)
        if (norms <= 1e-12).any():
            raise ZeroVector("cannot normalize zero rows from file")
        vectors /= norms[:, None]
    return EmbeddingMatrix(ids=ids, vectors=vectors)


def save_embeddings(embs: EmbeddingMatrix, path: str | Path) -> None:
    with open(path, "wb") as f:
        write_embeddings_block(f, embs)


def load_embeddings(path: str | Path) -> EmbeddingMatrix:
    with open(path, "rb") as f:
        return read_embeddings_block(f)
