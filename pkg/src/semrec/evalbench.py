"""Ranking quality metrics, paired bootstrap significance, and a latency
harness for the serving path.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import LengthMismatch, MissingTruth


def recall_at_k(ranking: list[str], truth: str, k: int) -> float:
    """1.0 if the relevant item appears in the top k, else 0.0."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not truth:
        raise MissingTruth("empty truth id")
    return 1.0 if truth in ranking[:k] else 0.0


def mrr_at_k(ranking: list[str], truth: str, k: int) -> float:
    """Reciprocal rank of the relevant item within the top k, else 0.0."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not truth:
        raise MissingTruth("empty truth id")
    for pos, item in enumerate(ranking[:k], start=1):
        if item == truth:
            return 1.0 / pos
    return 0.0


@dataclass
class MetricReport:
    k: int
    n_queries: int
    recall: float
    mrr: float
    per_query_recall: np.ndarray
    per_query_mrr: np.ndarray


def rank_metrics(rankings: list[list[str]], truths: list[str], k: int = 10) -> MetricReport:
    if len(rankings) != len(truths):
        raise LengthMismatch(f"{len(rankings)} rankings vs {len(truths)} truths")
    if not rankings:
        raise MissingTruth("no queries to evaluate")
    rec = np.array([recall_at_k(r, t, k) for r, t in zip(rankings, truths)])
    mrr = np.array([mrr_at_k(r, t, k) for r, t in zip(rankings, truths)])
    return MetricReport(
        k=k,
        n_queries=len(rankings),
        recall=float(rec.mean()),
        mrr=float(mrr.mean()),
        per_query_recall=rec,
        per_query_mrr=mrr,
    )


@dataclass
class BootstrapResult:
    delta: float       # mean(A) - mean(B) on the full sample
    ci_low: float
    ci_high: float
    p_value: float
    n_samples: int


def paired_bootstrap(
    scores_a: np.ndarray,
    scores_b: np.ndarray,
    n_samples: int = 5000,
    alpha: float = 0.05,
    seed: int = 42,
) -> BootstrapResult:
    """Percentile bootstrap over queries for the paired difference A - B.

    Query indices are resampled with replacement n_samples times; the CI is
    the [alpha/2, 1-alpha/2] percentile interval of the resampled deltas and
    the two-sided p-value is 2 * min(P(delta* <= 0), P(delta* >= 0)),
    clamped to [1/n_samples, 1].
    """
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise LengthMismatch(
            f"need two aligned score vectors of length >= 2, got {a.shape} and {b.shape}"
        )
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    diff = a - b
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, diff.size, size=(n_samples, diff.size))
    deltas = diff[idx].mean(axis=1)
    lo, hi = np.percentile(deltas, [100 * alpha / 2, 100 * (1 - alpha / 2)])
    p = 2.0 * min(float((deltas <= 0).mean()), float((deltas >= 0).mean()))
    p = min(1.0, max(1.0 / n_samples, p))
    return BootstrapResult(
        delta=float(diff.mean()),
        ci_low=float(lo),
        ci_high=float(hi),
        p_value=p,
        n_samples=n_samples,
    )


@dataclass
class LatencyStats:
    mean_ms: float
    p50_ms: float
    p99_ms: float


def _stats(samples_ms: np.ndarray) -> LatencyStats:
    return LatencyStats(
        mean_ms=float(samples_ms.mean()),
        p50_ms=float(np.percentile(samples_ms, 50)),
        p99_ms=float(np.percentile(samples_ms, 99)),
    )


@dataclass
class LatencyReport:
    n_queries: int
    warmup_discarded: int
    stages: dict[str, LatencyStats]
    total: LatencyStats
    qps: float


def latency_bench(run_fn, queries: list, warmup: int = 50, repeat: int = 1000) -> LatencyReport:
    """Serial single-worker loop timing run_fn(query) over the query list,
    cycling as needed.

    run_fn must return an object with encode_ns / search_ns / lookup_ns
    attributes.  The first `warmup` calls are discarded; qps is derived from
    the wall time of the measured section only.
    """
    if not queries:
        raise ValueError("no queries to benchmark")
    if repeat < 1:
        raise ValueError("repeat must be >= 1")
    n_q = len(queries)
    for i in range(warmup):
        run_fn(queries[i % n_q])
    enc = np.empty(repeat, dtype=np.float64)
    srch = np.empty(repeat, dtype=np.float64)
    look = np.empty(repeat, dtype=np.float64)
    wall0 = time.perf_counter_ns()
    for i in range(repeat):
        t = run_fn(queries[i % n_q])
        enc[i] = t.encode_ns
        srch[i] = t.search_ns
        look[i] = t.lookup_ns
    wall1 = time.perf_counter_ns()
    enc /= 1e6
    srch /= 1e6
    look /= 1e6
    total = enc + srch + look
    return LatencyReport(
        n_queries=repeat,
        warmup_discarded=warmup,
        stages={"encode": _stats(enc), "search": _stats(srch), "lookup": _stats(look)},
        total=_stats(total),
        qps=repeat / ((wall1 - wall0) / 1e9),
    )


@dataclass
class Table1Row:
    name: str
    recall: float
    mrr: float
    improvement_vs_baseline: float | None  # relative Recall@k gain; None on the baseline row


@dataclass
class Table1:
    k: int
    n_queries: int
    baseline: str
    rows: list[Table1Row]


def run_table1(
    variants: dict[str, Callable[[str], list[str]]],
    test_pairs: list[tuple[str, str]],
    k: int = 10,
    baseline: str | None = None,
) -> Table1:
    """Evaluate each variant (a query -> ranked item ids function) on
    (query, truth_item) pairs; improvement is relative Recall@k vs the
    baseline row (the first variant unless named).
    """
    if not variants:
        raise ValueError("no variants to evaluate")
    if not test_pairs:
        raise MissingTruth("no test pairs")
    names = list(variants)
    base = baseline if baseline is not None else names[0]
    if base not in variants:
        raise ValueError(f"baseline {base!r} is not a variant")
    queries = [q for q, _ in test_pairs]
    truths = [t for _, t in test_pairs]
    reports = {
        name: rank_metrics([fn(q) for q in queries], truths, k)
        for name, fn in variants.items()
    }
    base_recall = reports[base].recall
    rows = []
    for name in names:
        rep = reports[name]
        if name == base:
            imp = None
        elif base_recall > 0:
            imp = (rep.recall - base_recall) / base_recall
        else:
            imp = float("inf") if rep.recall > 0 else 0.0
        rows.append(Table1Row(name=name, recall=rep.recall, mrr=rep.mrr,
                              improvement_vs_baseline=imp))
    return Table1(k=k, n_queries=len(test_pairs), baseline=base, rows=rows)


# --- report rendering ---

def render_table1(table: Table1) -> str:
    name_w = max(6, max(len(r.name) for r in table.rows))
    k = table.k
    lines = [
        f"{'system':<{name_w}}  {f'recall@{k}':>10}  {f'mrr@{k}':>10}  {'vs ' + table.baseline:>12}"
    ]
    for r in table.rows:
        imp = "--" if r.improvement_vs_baseline is None else f"{r.improvement_vs_baseline:+.1%}"
        lines.append(f"{r.name:<{name_w}}  {r.recall:>10.4f}  {r.mrr:>10.4f}  {imp:>12}")
    lines.append(f"queries: {table.n_queries}, k: {k}")
    return "\n".join(lines)


def write_table1_json(table: Table1, path: str | Path) -> None:
    payload = {
        "k": table.k,
        "n_queries": table.n_queries,
        "baseline": table.baseline,
        "rows": [
            {
                "system": r.name,
                "recall": r.recall,
                "mrr": r.mrr,
                "improvement_vs_baseline": r.improvement_vs_baseline,
            }
            for r in table.rows
        ],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def write_table1_csv(table: Table1, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("system,k,n_queries,recall,mrr,improvement_vs_baseline\n")
        for r in table.rows:
            imp = "" if r.improvement_vs_baseline is None else f"{r.improvement_vs_baseline:.6f}"
            f.write(f"{r.name},{table.k},{table.n_queries},{r.recall:.6f},{r.mrr:.6f},{imp}\n")


def render_latency_table(report: LatencyReport) -> str:
    lines = [
        f"{'stage':<8}  {'mean_ms':>10}  {'p50_ms':>10}  {'p99_ms':>10}"
    ]
    for name in ("encode", "search", "lookup"):
        s = report.stages[name]
        lines.append(
            f"{name:<8}  {s.mean_ms:>10.3f}  {s.p50_ms:>10.3f}  {s.p99_ms:>10.3f}"
        )
    s = report.total
    lines.append(f"{'total':<8}  {s.mean_ms:>10.3f}  {s.p50_ms:>10.3f}  {s.p99_ms:>10.3f}")
    lines.append(
        f"throughput: {report.qps:.1f} qps over {report.n_queries} queries"
        f" ({report.warmup_discarded} warmup discarded)"
    )
    return "\n".join(lines)


def write_latency_json(report: LatencyReport, path: str | Path) -> None:
    payload = {
        "n_queries": report.n_queries,
        "warmup_discarded": report.warmup_discarded,
        "qps": report.qps,
        "stages": {
            name: {"mean_ms": s.mean_ms, "p50_ms": s.p50_ms, "p99_ms": s.p99_ms}
            for name, s in {**report.stages, "total": report.total}.items()
        },
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
