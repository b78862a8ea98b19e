import time
from dataclasses import dataclass

import numpy as np
import pytest

from semrec.errors import LengthMismatch, MissingTruth
from semrec.evalbench import (
    latency_bench,
    mrr_at_k,
    paired_bootstrap,
    rank_metrics,
    recall_at_k,
    render_latency_table,
    render_table1,
    run_table1,
)


# --- rank metrics ---


def test_metric_hand_cases():
    ranking = ["a", "b", "c", "d"]
    assert recall_at_k(ranking, "a", 10) == 1.0
    assert mrr_at_k(ranking, "a", 10) == 1.0
    assert recall_at_k(ranking, "c", 10) == 1.0
    assert mrr_at_k(ranking, "c", 10) == pytest.approx(1 / 3)
    assert recall_at_k(ranking, "zz", 10) == 0.0
    assert mrr_at_k(ranking, "zz", 10) == 0.0
    # cutoff: item at rank 3 is invisible at k=2
    assert recall_at_k(ranking, "c", 2) == 0.0
    assert mrr_at_k(ranking, "c", 2) == 0.0


def test_metric_validation():
    with pytest.raises(ValueError):
        recall_at_k(["a"], "a", 0)
    with pytest.raises(MissingTruth):
        mrr_at_k(["a"], "", 5)
    with pytest.raises(LengthMismatch):
        rank_metrics([["a"]], ["a", "b"])
    with pytest.raises(MissingTruth):
        rank_metrics([], [])


def test_mrr_never_exceeds_recall():
    rng = np.random.default_rng(0)
    items = [f"i{j}" for j in range(30)]
    for _ in range(1000):
        ranking = list(rng.permutation(items)[: rng.integers(1, 20)])
        truth = items[int(rng.integers(0, 30))]
        k = int(rng.integers(1, 15))
        assert mrr_at_k(ranking, truth, k) <= recall_at_k(ranking, truth, k)


def test_rank_metrics_permutation_invariant():
    rng = np.random.default_rng(1)
    items = [f"i{j}" for j in range(20)]
    rankings = [list(rng.permutation(items)[:10]) for _ in range(40)]
    truths = [items[int(rng.integers(0, 20))] for _ in range(40)]
    rep = rank_metrics(rankings, truths, 10)
    perm = rng.permutation(40)
    rep_shuffled = rank_metrics(
        [rankings[i] for i in perm], [truths[i] for i in perm], 10
    )
    assert rep.recall == pytest.approx(rep_shuffled.recall)
    assert rep.mrr == pytest.approx(rep_shuffled.mrr)
    assert rep.mrr <= rep.recall


# --- bootstrap ---


def test_bootstrap_identical_systems():
    scores = np.array([1.0, 0.0, 1.0, 1.0, 0.0])
    res = paired_bootstrap(scores, scores.copy(), n_samples=500, seed=1)
    assert res.delta == 0.0
    assert (res.ci_low, res.ci_high) == (0.0, 0.0)
    assert res.p_value == 1.0


def test_bootstrap_constant_shift():
    rng = np.random.default_rng(2)
    b = rng.random(50)
    res = paired_bootstrap(b + 1.0, b, n_samples=500, seed=3)
    assert res.delta == pytest.approx(1.0)
    assert res.ci_low == pytest.approx(1.0)
    assert res.ci_high == pytest.approx(1.0)
    assert res.p_value == 1.0 / 500  # every resample is positive -> clamped


def test_bootstrap_known_gap_brackets_truth():
    rng = np.random.default_rng(4)
    n = 200
    b = rng.random(n)
    gap = np.clip(0.24 + rng.standard_normal(n) * 0.3, -1, 1.5)
    a = b + gap
    true_delta = float(gap.mean())
    res = paired_bootstrap(a, b, n_samples=2000, seed=5)
    assert res.delta == pytest.approx(true_delta)
    assert res.ci_low < true_delta < res.ci_high
    assert res.ci_low > 0.0  # gap this large excludes zero
    assert res.p_value < 0.05


def test_bootstrap_reproducible_and_seed_sensitive():
    rng = np.random.default_rng(6)
    a, b = rng.random(30), rng.random(30)
    r1 = paired_bootstrap(a, b, n_samples=300, seed=7)
    r2 = paired_bootstrap(a, b, n_samples=300, seed=7)
    assert r1 == r2
    r3 = paired_bootstrap(a, b, n_samples=300, seed=8)
    assert (r3.ci_low, r3.ci_high) != (r1.ci_low, r1.ci_high)


def test_bootstrap_ci_shrinks_with_more_queries():
    rng = np.random.default_rng(9)
    big_a, big_b = rng.random(500), rng.random(500)
    small_a, small_b = big_a[:50], big_b[:50]
    wide = paired_bootstrap(small_a, small_b, n_samples=1000, seed=10)
    narrow = paired_bootstrap(big_a, big_b, n_samples=1000, seed=10)
    assert (narrow.ci_high - narrow.ci_low) < (wide.ci_high - wide.ci_low)


def test_bootstrap_validation():
    with pytest.raises(LengthMismatch):
        paired_bootstrap(np.ones(3), np.ones(4))
    with pytest.raises(LengthMismatch):
        paired_bootstrap(np.ones(1), np.ones(1))
    with pytest.raises(LengthMismatch):
        paired_bootstrap(np.ones((2, 2)), np.ones((2, 2)))


# --- latency ---


@dataclass
class FakeTimings:
    encode_ns: int
    search_ns: int
    lookup_ns: int


def test_latency_bench_stage_math():
    calls = []

    def run(query):
        calls.append(query)
        return FakeTimings(encode_ns=2_000_000, search_ns=1_000_000,
                           lookup_ns=500_000)

    report = latency_bench(run, ["q1", "q2", "q3"], warmup=5, repeat=20)
    assert len(calls) == 25
    assert calls[0] == "q1" and calls[3] == "q1"  # cycles through the list
    assert report.n_queries == 20
    assert report.warmup_discarded == 5
    assert report.stages["encode"].mean_ms == pytest.approx(2.0)
    assert report.stages["search"].p50_ms == pytest.approx(1.0)
    assert report.stages["lookup"].p99_ms == pytest.approx(0.5)
    assert report.total.mean_ms == pytest.approx(3.5)


def test_latency_p50_le_p99_and_qps_identity():
    def run(query):
        t0 = time.perf_counter_ns()
        x = 0
        for i in range(20000):
            x += i * i
        dt = time.perf_counter_ns() - t0
        return FakeTimings(encode_ns=dt, search_ns=0, lookup_ns=0)

    report = latency_bench(run, ["q"], warmup=10, repeat=300)
    assert report.total.p50_ms <= report.total.p99_ms
    # serial identity: qps * mean latency ~ 1 (within 10%)
    assert report.qps * (report.total.mean_ms / 1000.0) == pytest.approx(1.0, rel=0.10)


def test_latency_bench_validation():
    def run(query):
        return FakeTimings(0, 0, 0)

    with pytest.raises(ValueError):
        latency_bench(run, [], warmup=0, repeat=5)
    with pytest.raises(ValueError):
        latency_bench(run, ["q"], warmup=0, repeat=0)


# --- comparison table ---


def variants_fixture():
    table_truth = ["t1", "t2", "t3", "t4"]

    def perfect(q):
        return [q]  # query IS the truth id

    def top3(q):
        return ["x", "y", q]

    def never(q):
        return ["x", "y", "z"]

    return perfect, top3, never, [(t, t) for t in table_truth]


def test_run_table1_metrics_and_improvement():
    perfect, top3, never, pairs = variants_fixture()
    table = run_table1(
        {"bm25": top3, "dense": perfect, "none": never}, pairs, k=10
    )
    rows = {r.name: r for r in table.rows}
    assert rows["bm25"].recall == 1.0
    assert rows["bm25"].mrr == pytest.approx(1 / 3)
    assert rows["bm25"].improvement_vs_baseline is None
    assert rows["dense"].improvement_vs_baseline == pytest.approx(0.0)
    assert rows["none"].improvement_vs_baseline == pytest.approx(-1.0)
    assert rows["dense"].mrr == 1.0
    text = render_table1(table)
    assert "--" in text and "bm25" in text


def test_run_table1_identical_variants_identical_rows():
    perfect, _, _, pairs = variants_fixture()
    table = run_table1({"a": perfect, "b": perfect}, pairs, k=5)
    a, b = table.rows
    assert (a.recall, a.mrr) == (b.recall, b.mrr)


def test_render_latency_table_smoke():
    def run(query):
        return FakeTimings(1000, 1000, 1000)

    text = render_latency_table(latency_bench(run, ["q"], warmup=1, repeat=5))
    assert "encode" in text and "p99" in text
