"""System configuration: artifact paths, serving knobs, component params.

Config is a single JSON file.  Every section is optional; missing keys fall
back to defaults so a bare `{}` is a valid config.  Environment variables
SEMREC_HOST and SEMREC_PORT override the serving block at load time.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import FormatError
from ..index import HnswParams
from ..sparse import Bm25Params
from ..trainer import TrainConfig

DEFAULT_ARTIFACT_DIR = "artifacts"

MODES = ("dense", "sparse", "hybrid")
ENGINES = ("flat", "hnsw")


@dataclass
class PathsConfig:
    """Locations of every artifact the pipeline reads or writes."""

    catalog: str = f"{DEFAULT_ARTIFACT_DIR}/catalog.jsonl"
    pairs: str = f"{DEFAULT_ARTIFACT_DIR}/pairs.jsonl"
    train_pairs: str = f"{DEFAULT_ARTIFACT_DIR}/pairs.train.jsonl"
    test_pairs: str = f"{DEFAULT_ARTIFACT_DIR}/pairs.test.jsonl"
    split_manifest: str = f"{DEFAULT_ARTIFACT_DIR}/split.json"
    model: str = f"{DEFAULT_ARTIFACT_DIR}/model.enc1"
    qmodel: str = f"{DEFAULT_ARTIFACT_DIR}/model.qnt1"
    flat_embeddings: str = f"{DEFAULT_ARTIFACT_DIR}/corpus.emb1"
    hnsw_index: str = f"{DEFAULT_ARTIFACT_DIR}/index.hns1"
    bm25_index: str = f"{DEFAULT_ARTIFACT_DIR}/index.bm25"
    metadata_cache: str = f"{DEFAULT_ARTIFACT_DIR}/cache.mch1"
    loss_curve: str = f"{DEFAULT_ARTIFACT_DIR}/loss.csv"
    request_log: str = f"{DEFAULT_ARTIFACT_DIR}/requests.log"


@dataclass
class ServingConfig:
    host: str = "127.0.0.1"
    port: int = 8000
    default_k: int = 10
    default_mode: str = "hybrid"
    default_lambda: float = 0.5
    default_engine: str = "hnsw"

    def __post_init__(self) -> None:
        if not 1 <= self.port <= 65535:
            raise FormatError(f"port out of range: {self.port}")
        if self.default_k < 1:
            raise FormatError(f"default_k must be >= 1, got {self.default_k}")
        if self.default_mode not in MODES:
            raise FormatError(f"unknown mode: {self.default_mode!r}")
        if not 0.0 <= self.default_lambda <= 1.0:
            raise FormatError(
                f"default_lambda must lie in [0, 1], got {self.default_lambda}"
            )
        if self.default_engine not in ENGINES:
            raise FormatError(f"unknown engine: {self.default_engine!r}")


@dataclass
class EncoderConfig:
    hash_buckets: int = 32768
    d_in: int = 64
    d_out: int = 64

    def __post_init__(self) -> None:
        if self.hash_buckets < 1 or self.d_in < 1 or self.d_out < 1:
            raise FormatError("encoder dims must be positive")


@dataclass
class SystemConfig:
    """Top-level config: paths plus per-component parameter blocks."""

    paths: PathsConfig = field(default_factory=PathsConfig)
    serving: ServingConfig = field(default_factory=ServingConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    hnsw: HnswParams = field(default_factory=HnswParams)
    bm25: Bm25Params = field(default_factory=Bm25Params)
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 42


def _build_section(cls, raw: object, name: str):
    if not isinstance(raw, dict):
        raise FormatError(f"config section {name!r} must be an object")
    allowed = set(cls.__dataclass_fields__)
    unknown = set(raw) - allowed
    if unknown:
        raise FormatError(
            f"unknown keys in config section {name!r}: {sorted(unknown)}"
        )
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"bad config section {name!r}: {exc}") from exc


_SECTIONS = {
    "paths": PathsConfig,
    "serving": ServingConfig,
    "encoder": EncoderConfig,
    "hnsw": HnswParams,
    "bm25": Bm25Params,
    "train": TrainConfig,
}


def config_from_dict(raw: dict) -> SystemConfig:
    if not isinstance(raw, dict):
        raise FormatError("config root must be a JSON object")
    unknown = set(raw) - set(_SECTIONS) - {"seed"}
    if unknown:
        raise FormatError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    for name, cls in _SECTIONS.items():
        if name in raw:
            kwargs[name] = _build_section(cls, raw[name], name)
    if "seed" in raw:
        seed = raw["seed"]
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise FormatError(f"seed must be an integer, got {seed!r}")
        kwargs["seed"] = seed
    return SystemConfig(**kwargs)


def apply_env_overrides(cfg: SystemConfig) -> SystemConfig:
    """SEMREC_HOST / SEMREC_PORT take precedence over the config file."""
    host = os.environ.get("SEMREC_HOST")
    if host:
        cfg.serving.host = host
    port = os.environ.get("SEMREC_PORT")
    if port:
        try:
            cfg.serving.port = int(port)
        except ValueError as exc:
            raise FormatError(f"SEMREC_PORT is not an integer: {port!r}") from exc
        if not 1 <= cfg.serving.port <= 65535:
            raise FormatError(f"SEMREC_PORT out of range: {port}")
    return cfg


def load_config(path: str | Path | None = None) -> SystemConfig:
    """Read config JSON (or use all defaults when path is None)."""
    if path is None:
        cfg = SystemConfig()
    else:
        text = Path(path).read_text(encoding="utf-8")
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"config is not valid JSON: {exc}") from exc
        cfg = config_from_dict(raw)
    return apply_env_overrides(cfg)
