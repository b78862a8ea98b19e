"""Command-line entry point.

One subcommand per pipeline stage:

  synth        generate a synthetic catalog + interaction pairs
  ingest       parse and filter raw review/metadata JSONL into artifacts
  split        user-stratified train/test split with manifest
  train        contrastive training of the encoder
  quantize     int8 post-training quantization of the encoder
  embed        encode the catalog into an embedding file
  index-build  build the dense index (flat is the embedding file itself)
  cache-build  build the metadata display cache
  search       one query against the loaded artifacts
  eval         ranking-quality table over configured systems
  ablate       quantization / index ablation table
  bench        single-worker latency benchmark
  serve        HTTP API

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from ..encoder import (
    EmbeddingMatrix,
    encode_batch,
    load_embeddings,
    load_model,
    new_model,
    save_embeddings,
    save_model,
)
from ..errors import SemrecError
from ..evalbench import (
    latency_bench,
    render_latency_table,
    render_table1,
    run_table1,
    write_latency_json,
    write_table1_csv,
    write_table1_json,
)
from ..index import (
    HnswParams,
    build_flat,
    flat_search,
    hnsw_build,
    save_hnsw,
)
from ..ingest import (
    FilterConfig,
    SplitSpec,
    catalog_by_id,
    filter_interactions,
    gen_synthetic,
    load_catalog,
    load_pairs,
    parse_catalog,
    parse_reviews,
    split_pairs,
    write_catalog,
    write_pairs,
    write_split_manifest,
)
from ..quant import dequantize, load_quantized, quantize_model, save_quantized, size_report
from ..retrieval import RetrievalRequest, retrieve_timed
from ..sparse import build_bm25, bm25_topk, save_bm25
from ..store import build_cache, save_cache
from ..textproc import render_document, tokenize
from ..trainer import TrainConfig, train, write_loss_csv
from .config import SystemConfig, load_config


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad flags; the contract wants 1
    def error(self, message: str) -> None:
        raise UsageError(message)


def _ensure_parent(path: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)


def _corpus_texts(catalog) -> tuple[list[str], list[str]]:
    ids = [it.item_id for it in catalog]
    docs = [render_document(it) for it in catalog]
    return ids, docs


def _embed_corpus(model, catalog) -> EmbeddingMatrix:
    ids, docs = _corpus_texts(catalog)
    vecs = encode_batch(model, docs).astype(np.float32)
    return EmbeddingMatrix(ids=ids, vectors=vecs)


def _load_any_model(cfg: SystemConfig, prefer_quantized: bool = False):
    qpath, mpath = Path(cfg.paths.qmodel), Path(cfg.paths.model)
    if prefer_quantized and qpath.exists():
        return load_quantized(qpath)
    return load_model(mpath)


# --- subcommand handlers -------------------------------------------------


def cmd_synth(args, cfg: SystemConfig) -> int:
    items, pairs = gen_synthetic(
        n_items=args.items,
        n_pairs=args.pairs,
        vocab_size=args.vocab_size,
        mismatch_rate=args.mismatch_rate,
        seed=args.seed if args.seed is not None else cfg.seed,
    )
    _ensure_parent(cfg.paths.catalog)
    write_catalog(items, cfg.paths.catalog)
    _ensure_parent(cfg.paths.pairs)
    write_pairs(pairs, cfg.paths.pairs)
    print(f"wrote {len(items)} items -> {cfg.paths.catalog}")
    print(f"wrote {len(pairs)} pairs -> {cfg.paths.pairs}")
    return 0


def cmd_ingest(args, cfg: SystemConfig) -> int:
    reviews = parse_reviews(args.reviews)
    catalog = parse_catalog(args.meta)
    fcfg = FilterConfig(
        min_rating=args.min_rating,
        min_body_tokens=args.min_body_tokens,
        min_user_pairs=args.min_user_pairs,
        english_filter=args.english_filter,
        ascii_threshold=args.ascii_threshold,
        query_mode=args.query_mode,
    )
    by_id = catalog_by_id(catalog.records)
    pairs = filter_interactions(reviews.records, by_id, fcfg)
    _ensure_parent(cfg.paths.catalog)
    write_catalog(catalog.records, cfg.paths.catalog)
    _ensure_parent(cfg.paths.pairs)
    write_pairs(pairs, cfg.paths.pairs)
    print(
        f"reviews: {len(reviews.records)} parsed, {reviews.skipped} skipped; "
        f"catalog: {len(catalog.records)} parsed, {catalog.skipped} skipped"
    )
    print(f"kept {len(pairs)} interaction pairs -> {cfg.paths.pairs}")
    print(f"wrote {len(catalog.records)} items -> {cfg.paths.catalog}")
    return 0


def cmd_split(args, cfg: SystemConfig) -> int:
    pairs = load_pairs(cfg.paths.pairs)
    spec = SplitSpec(
        train_fraction=args.fraction,
        seed=args.seed if args.seed is not None else cfg.seed,
    )
    train_pairs, test_pairs = split_pairs(pairs, spec)
    _ensure_parent(cfg.paths.train_pairs)
    write_pairs(train_pairs, cfg.paths.train_pairs)
    write_pairs(test_pairs, cfg.paths.test_pairs)
    write_split_manifest(
        cfg.paths.split_manifest, spec, len(pairs),
        cfg.paths.train_pairs, cfg.paths.test_pairs,
    )
    print(
        f"split {len(pairs)} pairs -> {len(train_pairs)} train / "
        f"{len(test_pairs)} test (manifest: {cfg.paths.split_manifest})"
    )
    return 0


def _training_texts(cfg: SystemConfig) -> list[tuple[str, str]]:
    pairs = load_pairs(cfg.paths.train_pairs)
    by_id = catalog_by_id(load_catalog(cfg.paths.catalog))
    out = []
    for p in pairs:
        item = by_id.get(p.item_id)
        if item is None:
            continue
        out.append((p.query_text, render_document(item)))
    return out


def cmd_train(args, cfg: SystemConfig) -> int:
    tcfg = cfg.train
    overrides = {
        "batch_size": args.batch_size,
        "grad_accum": args.grad_accum,
        "epochs": args.epochs,
        "lr": args.lr,
        "temperature": args.temperature,
        "warmup_frac": args.warmup_frac,
        "weight_decay": args.weight_decay,
        "seed": args.seed,
    }
    fields = {k: v for k, v in overrides.items() if v is not None}
    if fields:
        base = {f: getattr(tcfg, f) for f in tcfg.__dataclass_fields__}
        base.update(fields)
        tcfg = TrainConfig(**base)
    texts = _training_texts(cfg)
    model = new_model(
        hash_buckets=cfg.encoder.hash_buckets,
        d_in=cfg.encoder.d_in,
        d_out=cfg.encoder.d_out,
        seed=tcfg.seed,
    )
    model, report = train(model, texts, tcfg)
    _ensure_parent(cfg.paths.model)
    save_model(model, cfg.paths.model)
    write_loss_csv(report, cfg.paths.loss_curve)
    print(
        f"trained on {len(texts)} pairs: {report.steps_run} micro-steps, "
        f"{report.optimizer_steps} optimizer steps, "
        f"final loss {report.final_loss:.4f}, {report.wall_time:.1f}s"
    )
    print(f"model -> {cfg.paths.model}; loss curve -> {cfg.paths.loss_curve}")
    return 0


def cmd_quantize(args, cfg: SystemConfig) -> int:
    model = load_model(cfg.paths.model)
    qmodel = quantize_model(model)
    _ensure_parent(cfg.paths.qmodel)
    save_quantized(qmodel, cfg.paths.qmodel)
    rep = size_report(model, qmodel)
    print(
        f"quantized -> {cfg.paths.qmodel} "
        f"(fp32 {rep.fp32_bytes} B / int8 {rep.int8_bytes} B, "
        f"ratio {rep.ratio:.2f}x)"
    )
    return 0


def cmd_embed(args, cfg: SystemConfig) -> int:
    catalog = load_catalog(cfg.paths.catalog)
    if args.quantized:
        model = dequantize(load_quantized(cfg.paths.qmodel))
    else:
        model = load_model(cfg.paths.model)
    embs = _embed_corpus(model, catalog)
    _ensure_parent(cfg.paths.flat_embeddings)
    save_embeddings(embs, cfg.paths.flat_embeddings)
    print(
        f"embedded {len(embs.ids)} items (d={embs.dim}) -> "
        f"{cfg.paths.flat_embeddings}"
    )
    return 0


def cmd_index_build(args, cfg: SystemConfig) -> int:
    if args.engine == "sparse":
        catalog = load_catalog(cfg.paths.catalog)
        corpus = [(it.item_id, tokenize(render_document(it))) for it in catalog]
        index = build_bm25(corpus, cfg.bm25)
        _ensure_parent(cfg.paths.bm25_index)
        save_bm25(index, cfg.paths.bm25_index)
        print(f"bm25 over {len(corpus)} docs -> {cfg.paths.bm25_index}")
        return 0
    embs = load_embeddings(cfg.paths.flat_embeddings)
    if args.engine == "flat":
        build_flat(embs)  # validates; the embedding file is the index
        print(f"flat index ready: {cfg.paths.flat_embeddings} ({len(embs.ids)} vectors)")
        return 0
    params = cfg.hnsw
    overrides = {
        "m": args.m,
        "ef_construction": args.ef_construction,
        "ef_search": args.ef_search,
        "seed": args.seed,
    }
    fields = {k: v for k, v in overrides.items() if v is not None}
    if fields:
        base = {f: getattr(params, f) for f in params.__dataclass_fields__}
        base.update(fields)
        params = HnswParams(**base)
    index = hnsw_build(embs, params)
    _ensure_parent(cfg.paths.hnsw_index)
    save_hnsw(index, cfg.paths.hnsw_index)
    print(
        f"hnsw (m={params.m}, efc={params.ef_construction}) over "
        f"{index.n} vectors -> {cfg.paths.hnsw_index}"
    )
    return 0


def cmd_cache_build(args, cfg: SystemConfig) -> int:
    catalog = load_catalog(cfg.paths.catalog)
    cache = build_cache(catalog)
    _ensure_parent(cfg.paths.metadata_cache)
    save_cache(cache, cfg.paths.metadata_cache)
    print(f"cached {len(cache)} records -> {cfg.paths.metadata_cache}")
    return 0


def _parse_filter_flags(raw: list[str]) -> dict[str, object]:
    filters: dict[str, object] = {}
    for entry in raw:
        if "=" not in entry:
            raise UsageError(f"--filter expects field=value, got {entry!r}")
        f, v = entry.split("=", 1)
        if f in ("price_min", "price_max"):
            try:
                filters[f] = float(v)
            except ValueError:
                raise UsageError(f"--filter {f} expects a number, got {v!r}")
        else:
            filters[f] = v
    return filters


def cmd_search(args, cfg: SystemConfig) -> int:
    from .server import ServerState

    state = ServerState(config=cfg)
    state.load()
    req = RetrievalRequest(
        query=args.query,
        k=args.k if args.k is not None else cfg.serving.default_k,
        mode=args.mode if args.mode is not None else cfg.serving.default_mode,
        fusion_weight=(
            args.fusion_weight
            if args.fusion_weight is not None
            else cfg.serving.default_lambda
        ),
        filters=_parse_filter_flags(args.filter),
        engine=args.engine if args.engine is not None else cfg.serving.default_engine,
        ef_search=args.ef_search,
    )
    results, timings = retrieve_timed(state.system, req)
    for r in results:
        title = r.record.title if r.record else "?"
        brand = r.record.brand if r.record and r.record.brand else "-"
        print(f"{r.rank:3d}  {r.score:8.4f}  {r.item_id:<16s}  {brand:<12.12s}  {title}")
    if not results:
        print("(no results)")
    print(
        f"timings_ms: encode={timings.encode_ns / 1e6:.3f} "
        f"search={timings.search_ns / 1e6:.3f} "
        f"lookup={timings.lookup_ns / 1e6:.3f} "
        f"total={timings.total_ns / 1e6:.3f}"
    )
    return 0


def _dense_variant(model, catalog, k: int):
    flat = build_flat(_embed_corpus(model, catalog))

    def run(query: str) -> list[str]:
        from ..encoder import encode

        vec = encode(model, query).astype(np.float32)
        return [item_id for item_id, _ in flat_search(flat, vec, k)]

    return run


def _bm25_variant(catalog, params, k: int):
    corpus = [(it.item_id, tokenize(render_document(it))) for it in catalog]
    index = build_bm25(corpus, params)

    def run(query: str) -> list[str]:
        return [item_id for item_id, _ in bm25_topk(index, tokenize(query), k)]

    return run


def cmd_eval(args, cfg: SystemConfig) -> int:
    catalog = load_catalog(cfg.paths.catalog)
    test_pairs = load_pairs(cfg.paths.test_pairs)
    queries = [(p.query_text, p.item_id) for p in test_pairs]
    names = [s.strip() for s in args.systems.split(",") if s.strip()]
    if not names:
        raise UsageError("--systems must name at least one system")
    variants = {}
    for name in names:
        if name == "bm25":
            variants[name] = _bm25_variant(catalog, cfg.bm25, args.k)
        elif name in ("dense-raw", "dense-untrained"):
            raw = new_model(
                hash_buckets=cfg.encoder.hash_buckets,
                d_in=cfg.encoder.d_in,
                d_out=cfg.encoder.d_out,
                seed=cfg.seed,
            )
            variants[name] = _dense_variant(raw, catalog, args.k)
        elif name == "dense-trained":
            variants[name] = _dense_variant(load_model(cfg.paths.model), catalog, args.k)
        else:
            raise UsageError(
                f"unknown system {name!r} "
                "(choose from bm25, dense-raw, dense-trained)"
            )
    table = run_table1(variants, queries, k=args.k, baseline=names[0])
    print(render_table1(table))
    if args.out_json:
        write_table1_json(table, args.out_json)
        print(f"json -> {args.out_json}")
    if args.out_csv:
        write_table1_csv(table, args.out_csv)
        print(f"csv -> {args.out_csv}")
    return 0


def cmd_ablate(args, cfg: SystemConfig) -> int:
    catalog = load_catalog(cfg.paths.catalog)
    test_pairs = load_pairs(cfg.paths.test_pairs)
    queries = [(p.query_text, p.item_id) for p in test_pairs]
    model = load_model(cfg.paths.model)
    qmodel = quantize_model(model)
    deq = dequantize(qmodel)

    embs_q = _embed_corpus(deq, catalog)
    hnsw = hnsw_build(embs_q, cfg.hnsw)
    flat_q = build_flat(embs_q)

    def hnsw_variant(query: str) -> list[str]:
        from ..encoder import encode
        from ..index import hnsw_search

        vec = encode(deq, query).astype(np.float32)
        return [item_id for item_id, _ in hnsw_search(hnsw, vec, args.k)]

    def flat_q_variant(query: str) -> list[str]:
        from ..encoder import encode

        vec = encode(deq, query).astype(np.float32)
        return [item_id for item_id, _ in flat_search(flat_q, vec, args.k)]

    variants = {
        "fp32-flat": _dense_variant(model, catalog, args.k),
        "int8-flat": flat_q_variant,
        "int8-hnsw": hnsw_variant,
    }
    table = run_table1(variants, queries, k=args.k, baseline="fp32-flat")
    print(render_table1(table))
    rep = size_report(model, qmodel)
    print(
        f"model size: fp32 {rep.fp32_bytes} B, int8 {rep.int8_bytes} B, "
        f"ratio {rep.ratio:.2f}x"
    )
    if args.out_json:
        write_table1_json(table, args.out_json)
        print(f"json -> {args.out_json}")
    return 0


def cmd_bench(args, cfg: SystemConfig) -> int:
    from .server import ServerState

    state = ServerState(config=cfg)
    state.load()
    if Path(cfg.paths.test_pairs).exists():
        queries = [p.query_text for p in load_pairs(cfg.paths.test_pairs)]
    else:
        queries = [p.query_text for p in load_pairs(cfg.paths.pairs)]
    if args.n_queries is not None:
        queries = queries[: args.n_queries]
    if not queries:
        raise SemrecError("no queries available for benchmarking")

    def run(query: str):
        req = RetrievalRequest(
            query=query,
            k=args.k if args.k is not None else cfg.serving.default_k,
            mode=args.mode if args.mode is not None else cfg.serving.default_mode,
            fusion_weight=cfg.serving.default_lambda,
            engine=args.engine
            if args.engine is not None
            else cfg.serving.default_engine,
        )
        return retrieve_timed(state.system, req)[1]

    report = latency_bench(run, queries, warmup=args.warmup, repeat=args.repeat)
    print(render_latency_table(report))
    if args.out_json:
        write_latency_json(report, args.out_json)
        print(f"json -> {args.out_json}")
    return 0


def cmd_serve(args, cfg: SystemConfig) -> int:
    import uvicorn

    from .server import create_app

    if args.host is not None:
        cfg.serving.host = args.host
    if args.port is not None:
        cfg.serving.port = args.port
    app = create_app(cfg, preload=True)
    print(f"serving on http://{cfg.serving.host}:{cfg.serving.port}")
    uvicorn.run(app, host=cfg.serving.host, port=cfg.serving.port, log_level="warning")
    return 0


# --- parser ---------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="semrec", description=__doc__)
    parser.add_argument("--config", default=None, help="path to system config JSON")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("synth", help="generate synthetic catalog and pairs")
    p.add_argument("--items", type=int, required=True)
    p.add_argument("--pairs", type=int, required=True)
    p.add_argument("--vocab-size", type=int, default=480)
    p.add_argument("--mismatch-rate", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="parse and filter raw JSONL data")
    p.add_argument("--reviews", required=True)
    p.add_argument("--meta", required=True)
    p.add_argument("--min-rating", type=float, default=4.0)
    p.add_argument("--min-body-tokens", type=int, default=5)
    p.add_argument("--min-user-pairs", type=int, default=3)
    p.add_argument("--english-filter", action="store_true")
    p.add_argument("--ascii-threshold", type=float, default=0.9)
    p.add_argument("--query-mode", choices=("train", "eval_hard"), default="train")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("split", help="train/test split of interaction pairs")
    p.add_argument("--fraction", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="contrastive encoder training")
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--grad-accum", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--warmup-frac", type=float, default=None)
    p.add_argument("--weight-decay", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("quantize", help="int8 quantization of the trained encoder")
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("embed", help="encode the catalog into an embedding file")
    p.add_argument("--quantized", action="store_true", help="use the int8 encoder")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("index-build", help="build a retrieval index")
    p.add_argument("--engine", choices=("flat", "hnsw", "sparse"), default="hnsw")
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--ef-construction", type=int, default=None)
    p.add_argument("--ef-search", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_index_build)

    p = sub.add_parser("cache-build", help="build the metadata display cache")
    p.set_defaults(func=cmd_cache_build)

    p = sub.add_parser("search", help="run one query end to end")
    p.add_argument("--query", required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--mode", choices=("dense", "sparse", "hybrid"), default=None)
    p.add_argument(
        "--fusion-weight", "--lambda", dest="fusion_weight", type=float, default=None
    )
    p.add_argument("--engine", choices=("flat", "hnsw"), default=None)
    p.add_argument("--ef-search", type=int, default=None)
    p.add_argument(
        "--filter", action="append", default=[], metavar="FIELD=VALUE",
        help="metadata filter, repeatable (brand=…, price_min=…, price_max=…)",
    )
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("eval", help="ranking-quality table over systems")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--systems", default="bm25,dense-raw,dense-trained")
    p.add_argument("--out-json", default=None)
    p.add_argument("--out-csv", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="quantization / index ablation table")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--out-json", default=None)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("bench", help="single-worker latency benchmark")
    p.add_argument("--n-queries", type=int, default=None)
    p.add_argument("--warmup", type=int, default=50)
    p.add_argument("--repeat", type=int, default=1000)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--mode", choices=("dense", "sparse", "hybrid"), default=None)
    p.add_argument("--engine", choices=("flat", "hnsw"), default=None)
    p.add_argument("--out-json", default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("serve", help="run the HTTP API")
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "func", None) is None:
            parser.print_help(sys.stderr)
            return 1
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (SemrecError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 2


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
