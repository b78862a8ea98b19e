"""Post-training symmetric INT8 quantization of the encoder.

Embedding rows are quantized per row and the projection per output column:
scale = max|w| / 127 (1.0 for an all-zero group), q = round(w / scale)
clamped to [-127, 127].  Dequantization error is therefore at most scale/2
per weight, and re-quantizing a dequantized model reproduces it bit for bit.
"""
from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import binio
from .encoder import EncoderModel, write_model
from .errors import EmptySequence, NonFiniteWeights, VersionMismatch, ZeroVector
from .textproc import MAX_SEQ_LEN, tokenize, truncate_tokens

_MAGIC = b"QNT1"
_VERSION = 1
_QMAX = 127


@dataclass
class QuantizedModel:
    q_emb: np.ndarray        # int8 [hash_buckets, d_in]
    emb_scales: np.ndarray   # float32 [hash_buckets]
    q_proj: np.ndarray       # int8 [d_in, d_out]
    proj_scales: np.ndarray  # float32 [d_out]
    seed: int
    _hash_cache: dict[str, int] = field(default_factory=dict, repr=False)
    _proj_f32: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if (self.emb_scales <= 0).any() or (self.proj_scales <= 0).any():
            raise ValueError("quantization scales must be strictly positive")

    @property
    def hash_buckets(self) -> int:
        return self.q_emb.shape[0]

    @property
    def d_in(self) -> int:
        return self.q_emb.shape[1]

    @property
    def d_out(self) -> int:
        return self.q_proj.shape[1]

    def bucket(self, token: str) -> int:
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

    def proj_f32(self) -> np.ndarray:
        # the projection is tiny; keep a dequantized copy for serving
        if self._proj_f32 is None:
            self._proj_f32 = self.q_proj.astype(np.float32) * self.proj_scales[None, :].astype(np.float32)
        return self._proj_f32


def _group_scales(w: np.ndarray, axis: int) -> np.ndarray:
    scales = np.abs(w).max(axis=axis) / _QMAX
    scales[scales == 0.0] = 1.0
    return scales.astype(np.float32)


def quantize_model(model: EncoderModel) -> QuantizedModel:
    if not (np.isfinite(model.emb).all() and np.isfinite(model.proj).all()):
        raise NonFiniteWeights("cannot quantize non-finite weights")
    emb_scales = _group_scales(model.emb, axis=1)
    q_emb = np.clip(
        np.round(model.emb / emb_scales[:, None]), -_QMAX, _QMAX
    ).astype(np.int8)
    proj_scales = _group_scales(model.proj, axis=0)
    q_proj = np.clip(
        np.round(model.proj / proj_scales[None, :]), -_QMAX, _QMAX
    ).astype(np.int8)
    return QuantizedModel(
        q_emb=q_emb,
        emb_scales=emb_scales,
        q_proj=q_proj,
        proj_scales=proj_scales,
        seed=model.seed,
    )


def dequantize(qmodel: QuantizedModel, dtype=np.float32) -> EncoderModel:
    emb = qmodel.q_emb.astype(dtype) * qmodel.emb_scales[:, None].astype(dtype)
    proj = qmodel.q_proj.astype(dtype) * qmodel.proj_scales[None, :].astype(dtype)
    return EncoderModel(emb=emb, proj=proj, seed=qmodel.seed)


def encode_q(qmodel: QuantizedModel, text: str, max_len: int = MAX_SEQ_LEN) -> np.ndarray:
    """Encode with the quantized weights; only touched rows are dequantized."""
    tokens = truncate_tokens(tokenize(text), max_len).tokens
    if not tokens:
        raise EmptySequence(f"text has no tokens: {text!r}")
    idx = np.fromiter((qmodel.bucket(t) for t in tokens), dtype=np.int64, count=len(tokens))
    rows = qmodel.q_emb[idx].astype(np.float32) * qmodel.emb_scales[idx, None]
    pooled = rows.mean(axis=0)
    u = pooled @ qmodel.proj_f32()
    norm = float(np.linalg.norm(u))
    if norm < 1e-12:
        raise ZeroVector("quantized encoding collapsed to zero")
    return u / norm


@dataclass
class SizeReport:
    fp32_bytes: int
    int8_bytes: int
    ratio: float


def size_report(model: EncoderModel, qmodel: QuantizedModel) -> SizeReport:
    """Serialized artifact sizes: ENC1 bytes vs QNT1 bytes for these models."""
    buf_f = io.BytesIO()
    write_model(buf_f, model)
    buf_q = io.BytesIO()
    write_quantized(buf_q, qmodel)
    fp32 = buf_f.tell()
    int8 = buf_q.tell()
    return SizeReport(fp32_bytes=fp32, int8_bytes=int8, ratio=fp32 / int8)


def write_quantized(f, qmodel: QuantizedModel) -> None:
    f.write(_MAGIC)
    binio.write_u16(f, _VERSION)
    binio.write_u32(f, qmodel.hash_buckets)
    binio.write_u32(f, qmodel.d_in)
    binio.write_u32(f, qmodel.d_out)
    binio.write_u64(f, qmodel.seed)
    binio.write_array(f, qmodel.emb_scales, "<f4")
    binio.write_array(f, qmodel.q_emb, "<i1")
    binio.write_array(f, qmodel.proj_scales, "<f4")
    binio.write_array(f, qmodel.q_proj, "<i1")


def save_quantized(qmodel: QuantizedModel, path: str | Path) -> None:
    with open(path, "wb") as f:
        write_quantized(f, qmodel)


def load_quantized(path: str | Path) -> QuantizedModel:
    with open(path, "rb") as f:
        binio.read_magic(f, _MAGIC)
        version = binio.read_u16(f)
        if version != _VERSION:
            raise VersionMismatch(f"unsupported QNT1 version {version}")
        buckets = binio.read_u32(f)
        d_in = binio.read_u32(f)
        d_out = binio.read_u32(f)
        seed = binio.read_u64(f)
        emb_scales = binio.read_array(f, "<f4", (buckets,))
        q_emb = binio.read_array(f, "<i1", (buckets, d_in))
        proj_scales = binio.read_array(f, "<f4", (d_out,))
        q_proj = binio.read_array(f, "<i1", (d_in, d_out))
    if not (np.isfinite(emb_scales).all() and np.isfinite(proj_scales).all()):
        raise NonFiniteWeights("stored scales contain NaN or inf")
    return QuantizedModel(
        q_emb=q_emb,
        emb_scales=emb_scales,
        q_proj=q_proj,
        proj_scales=proj_scales,
        seed=seed,
    )
