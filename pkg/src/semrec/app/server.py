"""HTTP serving layer.

Endpoints:
  GET  /health        liveness plus artifact checksums, dims, corpus size
  POST /search        query -> ranked items with per-stage timings
  GET  /item/{id}     metadata record for one item
  POST /ab            side-by-side latency/overlap comparison of two configs

All floats in responses are rounded to 6 significant digits.  Every request
appends one JSON line (route, latency_ms, k, mode) to the request log.
Malformed input is a 400; unknown items are 404; before artifacts are
loaded every data endpoint (and /health) reports 503.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from ..encoder import load_embeddings, load_model
from ..errors import ArtifactsMissing, SemrecError
from ..index import build_flat, load_hnsw
from ..ingest import file_sha256
from ..quant import load_quantized
from ..retrieval import (
    ENGINES,
    MODES,
    RetrievalRequest,
    SearchSystem,
    retrieve_timed,
)
from ..sparse import load_bm25
from ..store import load_cache
from .config import SystemConfig

_NS_PER_MS = 1e6


def sig6(x: float) -> float:
    """Round to 6 significant digits (wire format for all floats)."""
    return float(f"{x:.6g}")


def _jaccard(a: set[str], b: set[str]) -> float:
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


@dataclass
class ServerState:
    config: SystemConfig
    system: SearchSystem | None = None
    checksums: dict[str, str] = field(default_factory=dict)
    dims: dict[str, int] = field(default_factory=dict)
    n_items: int = 0
    ab_lock: threading.Lock = field(default_factory=threading.Lock)
    log_lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def ready(self) -> bool:
        return self.system is not None

    def load(self) -> None:
        """Load every artifact; prefers the quantized encoder when present."""
        paths = self.config.paths
        qpath = Path(paths.qmodel)
        mpath = Path(paths.model)
        if qpath.exists():
            model = load_quantized(qpath)
            self.checksums["qmodel"] = file_sha256(qpath)
        elif mpath.exists():
            model = load_model(mpath)
            self.checksums["model"] = file_sha256(mpath)
        else:
            raise ArtifactsMissing(
                f"no encoder model at {paths.qmodel} or {paths.model}"
            )

        flat = None
        flat_path = Path(paths.flat_embeddings)
        if flat_path.exists():
            flat = build_flat(load_embeddings(flat_path))
            self.checksums["flat_embeddings"] = file_sha256(flat_path)

        hnsw = None
        hnsw_path = Path(paths.hnsw_index)
        if hnsw_path.exists():
            hnsw = load_hnsw(hnsw_path)
            self.checksums["hnsw_index"] = file_sha256(hnsw_path)
        if flat is None and hnsw is None:
            raise ArtifactsMissing(
                f"no dense index at {paths.flat_embeddings} or {paths.hnsw_index}"
            )

        bm25_path = Path(paths.bm25_index)
        if not bm25_path.exists():
            raise ArtifactsMissing(f"no sparse index at {paths.bm25_index}")
        bm25 = load_bm25(bm25_path)
        self.checksums["bm25_index"] = file_sha256(bm25_path)

        cache_path = Path(paths.metadata_cache)
        if not cache_path.exists():
            raise ArtifactsMissing(f"no metadata cache at {paths.metadata_cache}")
        cache = load_cache(cache_path)
        self.checksums["metadata_cache"] = file_sha256(cache_path)

        self.dims = {
            "hash_buckets": model.emb.shape[0]
            if hasattr(model, "emb")
            else model.q_emb.shape[0],
            "d_in": model.emb.shape[1]
            if hasattr(model, "emb")
            else model.q_emb.shape[1],
            "d_out": model.proj.shape[1]
            if hasattr(model, "proj")
            else model.q_proj.shape[1],
        }
        self.n_items = hnsw.n if hnsw is not None else len(flat.ids)
        self.system = SearchSystem(
            model=model, flat=flat, hnsw=hnsw, bm25=bm25, cache=cache
        )
        self._warm()

    def _warm(self) -> None:
        # first dense search pays kernel compile cost; keep it off the clock
        try:
            engine = "hnsw" if self.system.hnsw is not None else "flat"
            req = RetrievalRequest(query="warmup", k=1, mode="dense", engine=engine)
            retrieve_timed(self.system, req)
        except SemrecError:
            pass

    def log_request(
        self, route: str, latency_ms: float, k: int | None, mode: str | None
    ) -> None:
        line = json.dumps(
            {
                "route": route,
                "latency_ms": sig6(latency_ms),
                "k": k,
                "mode": mode,
            },
            sort_keys=True,
        )
        path = Path(self.config.paths.request_log)
        with self.log_lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            with path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")


class BadRequest(SemrecError):
    """Client-side input error; mapped to HTTP 400."""


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise BadRequest(msg)


def _parse_filters(raw: object) -> dict[str, object]:
    """Accept {"brand": "x"} or [["brand", "x"], ...] forms."""
    if raw is None:
        return {}
    if isinstance(raw, dict):
        _require(all(isinstance(f, str) for f in raw), "filter fields must be strings")
        return dict(raw)
    if isinstance(raw, list):
        out: dict[str, object] = {}
        for entry in raw:
            _require(
                isinstance(entry, (list, tuple)) and len(entry) == 2,
                "filter entries must be [field, value] pairs",
            )
            f, v = entry
            _require(isinstance(f, str), "filter fields must be strings")
            out[f] = v
        return out
    raise BadRequest("filters must be an object or a list of pairs")


def _search_request(payload: object, cfg: SystemConfig) -> RetrievalRequest:
    _require(isinstance(payload, dict), "body must be a JSON object")
    allowed = {"query", "k", "mode", "lambda", "filters", "engine", "ef_search"}
    unknown = set(payload) - allowed
    _require(not unknown, f"unknown fields: {sorted(unknown)}")
    query = payload.get("query")
    _require(isinstance(query, str) and query.strip() != "", "query must be a non-empty string")
    k = payload.get("k", cfg.serving.default_k)
    _require(isinstance(k, int) and not isinstance(k, bool) and k >= 1, "k must be an integer >= 1")
    mode = payload.get("mode", cfg.serving.default_mode)
    _require(mode in MODES, f"mode must be one of {list(MODES)}")
    lam = payload.get("lambda", cfg.serving.default_lambda)
    _require(
        isinstance(lam, (int, float)) and not isinstance(lam, bool) and 0.0 <= lam <= 1.0,
        "lambda must be a number in [0, 1]",
    )
    engine = payload.get("engine", cfg.serving.default_engine)
    _require(engine in ENGINES, f"engine must be one of {list(ENGINES)}")
    ef = payload.get("ef_search")
    if ef is not None:
        _require(isinstance(ef, int) and not isinstance(ef, bool) and ef >= 1, "ef_search must be an integer >= 1")
    filters = _parse_filters(payload.get("filters"))
    return RetrievalRequest(
        query=query,
        k=k,
        mode=mode,
        fusion_weight=float(lam),
        filters=filters,
        engine=engine,
        ef_search=ef,
    )


def _result_row(res) -> dict:
    rec = res.record
    return {
        "item_id": res.item_id,
        "rank": res.rank,
        "score": sig6(res.score),
        "title": rec.title if rec is not None else None,
        "brand": rec.brand if rec is not None else None,
        "source_scores": {k: sig6(v) for k, v in res.source_scores.items()},
    }


_AB_CONFIG_FIELDS = {"mode", "lambda", "engine", "ef_search"}
_AB_OVERLAP_K = 10


def _ab_request(payload: object, cfg: SystemConfig, query: str) -> RetrievalRequest:
    body = {"query": query, "k": _AB_OVERLAP_K, **{k: v for k, v in payload.items()}}
    return _search_request(body, cfg)


def create_app(config: SystemConfig, preload: bool = True) -> FastAPI:
    """Build the app; with preload the process fails fast on missing artifacts."""
    state = ServerState(config=config)
    if preload:
        state.load()

    app = FastAPI(title="semrec", docs_url=None, redoc_url=None)
    app.state.semrec = state
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["GET", "POST"],
        allow_headers=["*"],
    )

    @app.exception_handler(RequestValidationError)
    async def _on_validation(_req: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(BadRequest)
    async def _on_bad_request(_req: Request, exc: BadRequest):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(SemrecError)
    async def _on_semrec_error(_req: Request, exc: SemrecError):
        if isinstance(exc, ArtifactsMissing):
            return JSONResponse(status_code=503, content={"detail": str(exc)})
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/health")
    def health():
        t0 = time.perf_counter_ns()
        if not state.ready:
            return JSONResponse(
                status_code=503, content={"status": "loading", "detail": "artifacts not loaded"}
            )
        body = {
            "status": "ok",
            "checksums": dict(state.checksums),
            "dims": dict(state.dims),
            "n_items": state.n_items,
        }
        state.log_request("/health", (time.perf_counter_ns() - t0) / _NS_PER_MS, None, None)
        return body

    def _guard_ready() -> SearchSystem:
        if not state.ready:
            raise ArtifactsMissing("artifacts not loaded")
        return state.system

    @app.post("/search")
    def search(payload: dict):
        system = _guard_ready()
        req = _search_request(payload, config)
        t0 = time.perf_counter_ns()
        results, timings = retrieve_timed(system, req)
        total_ms = (time.perf_counter_ns() - t0) / _NS_PER_MS
        body = {
            "results": [_result_row(r) for r in results],
            "timings_ms": {
                "encode": sig6(timings.encode_ns / _NS_PER_MS),
                "search": sig6(timings.search_ns / _NS_PER_MS),
                "lookup": sig6(timings.lookup_ns / _NS_PER_MS),
                "total": sig6(timings.total_ns / _NS_PER_MS),
            },
        }
        state.log_request("/search", total_ms, req.k, req.mode)
        return body

    @app.get("/item/{item_id}")
    def item(item_id: str):
        system = _guard_ready()
        t0 = time.perf_counter_ns()
        rec = system.cache.records.get(item_id)
        latency = (time.perf_counter_ns() - t0) / _NS_PER_MS
        state.log_request("/item", latency, None, None)
        if rec is None:
            return JSONResponse(
                status_code=404, content={"detail": f"unknown item: {item_id}"}
            )
        return {
            "item_id": rec.item_id,
            "title": rec.title,
            "brand": rec.brand,
            "price": sig6(rec.price) if rec.price is not None else None,
            "image_url": rec.image_url,
        }

    def _run_side(system: SearchSystem, queries: list[str], cfg_raw: dict):
        totals_ms: list[float] = []
        top_sets: list[set[str]] = []
        wall0 = time.perf_counter_ns()
        for q in queries:
            req = _ab_request(cfg_raw, config, q)
            results, timings = retrieve_timed(system, req)
            totals_ms.append(timings.total_ns / _NS_PER_MS)
            top_sets.append({r.item_id for r in results[:_AB_OVERLAP_K]})
        wall_s = (time.perf_counter_ns() - wall0) / 1e9
        arr = np.asarray(totals_ms, dtype=np.float64)
        return {
            "p50": float(np.percentile(arr, 50)),   # milliseconds
            "p99": float(np.percentile(arr, 99)),
            "qps": len(queries) / wall_s if wall_s > 0 else 0.0,
        }, top_sets

    @app.post("/ab")
    def ab(payload: dict):
        system = _guard_ready()
        _require(isinstance(payload, dict), "body must be a JSON object")
        unknown = set(payload) - {"queries", "config_a", "config_b"}
        _require(not unknown, f"unknown fields: {sorted(unknown)}")
        queries = payload.get("queries")
        _require(
            isinstance(queries, list)
            and len(queries) >= 1
            and all(isinstance(q, str) and q.strip() != "" for q in queries),
            "queries must be a non-empty list of non-empty strings",
        )
        sides = {}
        for name in ("config_a", "config_b"):
            raw = payload.get(name, {})
            _require(isinstance(raw, dict), f"{name} must be an object")
            unknown = set(raw) - _AB_CONFIG_FIELDS
            _require(not unknown, f"unknown fields in {name}: {sorted(unknown)}")
            # validate eagerly so a bad config 400s before any work runs
            _ab_request(raw, config, queries[0])
            sides[name] = raw

        t0 = time.perf_counter_ns()
        with state.ab_lock:  # concurrent /ab calls queue rather than interleave
            stats_a, sets_a = _run_side(system, queries, sides["config_a"])
            stats_b, sets_b = _run_side(system, queries, sides["config_b"])
        overlap = float(np.mean([_jaccard(a, b) for a, b in zip(sets_a, sets_b)]))
        for stats in (stats_a, stats_b):
            stats["recall_overlap@10"] = sig6(overlap)
            stats["p50"] = sig6(stats["p50"])
            stats["p99"] = sig6(stats["p99"])
            stats["qps"] = sig6(stats["qps"])
        total_ms = (time.perf_counter_ns() - t0) / _NS_PER_MS
        state.log_request("/ab", total_ms, None, None)
        return {
            "n_queries": len(queries),
            "config_a": stats_a,
            "config_b": stats_b,
        }

    return app
