import math
import random

import pytest

from semrec.errors import DuplicateDoc, EmptyCorpus, UnknownDoc
from semrec.sparse import (
    Bm25Index,
    Bm25Params,
    bm25_score,
    bm25_topk,
    build_bm25,
    idf,
    load_bm25,
    save_bm25,
)
from semrec.textproc import TokenSeq


def brute_score(corpus, params, query_tokens, doc_id):
    """Straight transcription of the scoring formula, independent of the
    posting-list implementation: non-negative idf, saturating tf, length
    normalization against the corpus average, bag semantics over the query."""
    docs = dict(corpus)
    n = len(corpus)
    avgdl = sum(len(toks) for _, toks in corpus) / n
    toks = docs[doc_id]
    dl = len(toks)
    score = 0.0
    for term in query_tokens:  # repeated query terms count repeatedly
        df = sum(1 for _, d in corpus if term in d)
        if df == 0:
            continue
        tf = toks.count(term)
        if tf == 0:
            continue
        term_idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
        denom = tf + params.k1 * (1.0 - params.b + params.b * dl / avgdl)
        score += term_idf * tf * (params.k1 + 1.0) / denom
    return score


def brute_topk(corpus, params, query_tokens, k):
    scored = [
        (doc_id, brute_score(corpus, params, query_tokens, doc_id))
        for doc_id, _ in corpus
    ]
    scored = [(d, s) for d, s in scored if s > 0.0]
    scored.sort(key=lambda t: (-t[1], t[0]))
    return scored[:k]


def make_corpus(rng, n_docs, vocab=30):
    corpus = []
    for i in range(n_docs):
        length = rng.randint(1, 12)
        corpus.append(
            (f"d{i:03d}", [f"t{rng.randrange(vocab)}" for _ in range(length)])
        )
    return corpus


def test_idf_hand_values():
    # 10 docs, term in exactly 5 -> idf = ln 2
    corpus = [(f"d{i}", ["common"] if i < 5 else ["rare"]) for i in range(10)]
    index = build_bm25(corpus)
    assert idf(index, "common") == pytest.approx(math.log(2.0))
    assert idf(index, "rare") == pytest.approx(math.log(2.0))
    # unseen term: df=0 -> ln(1 + 10.5/0.5) = ln 22
    assert idf(index, "nope") == pytest.approx(math.log(22.0))


def test_idf_positive_even_for_ubiquitous_terms():
    corpus = [(f"d{i}", ["every", f"x{i}"]) for i in range(50)]
    index = build_bm25(corpus)
    assert idf(index, "every") > 0.0


def test_score_at_average_length():
    # all docs same length -> |d| = avgdl -> weight = tf(k1+1)/(tf+k1)
    params = Bm25Params(k1=1.2, b=0.75)
    corpus = [("a", ["x", "y"]), ("b", ["x", "z"]), ("c", ["w", "v"])]
    index = build_bm25(corpus, params)
    expect = idf(index, "x") * (1.0 * (1.2 + 1.0)) / (1.0 + 1.2)
    assert bm25_score(index, ["x"], "a") == pytest.approx(expect)


def test_bag_semantics_repeated_query_terms():
    corpus = [("a", ["x", "y"]), ("b", ["z", "y"])]
    index = build_bm25(corpus)
    one = bm25_score(index, ["x"], "a")
    double = bm25_score(index, ["x", "x"], "a")
    assert double == pytest.approx(2.0 * one)


def test_score_matches_brute_force_on_random_corpora():
    params = Bm25Params()
    for seed in range(20):
        rng = random.Random(seed)
        corpus = make_corpus(rng, n_docs=30)
        index = build_bm25(corpus, params)
        query = [f"t{rng.randrange(30)}" for _ in range(rng.randint(1, 6))]
        for doc_id, _ in corpus:
            assert bm25_score(index, query, doc_id) == pytest.approx(
                brute_score(corpus, params, query, doc_id), abs=1e-12
            )


def test_topk_matches_brute_force_ranking():
    params = Bm25Params()
    for seed in range(20):
        rng = random.Random(1000 + seed)
        corpus = make_corpus(rng, n_docs=30)
        index = build_bm25(corpus, params)
        query = [f"t{rng.randrange(30)}" for _ in range(rng.randint(1, 6))]
        got = bm25_topk(index, query, 10)
        want = brute_topk(corpus, params, query, 10)
        assert [d for d, _ in got] == [d for d, _ in want]
        for (_, gs), (_, ws) in zip(got, want):
            assert gs == pytest.approx(ws, abs=1e-12)


def test_topk_all_unseen_query_is_empty():
    corpus = [("a", ["x"]), ("b", ["y"])]
    index = build_bm25(corpus)
    assert bm25_topk(index, ["unseen", "tokens"], 5) == []


def test_topk_ties_break_by_ascending_doc_id():
    corpus = [("b", ["x"]), ("a", ["x"]), ("c", ["x"])]
    index = build_bm25(corpus)
    ranked = [d for d, _ in bm25_topk(index, ["x"], 3)]
    assert ranked == ["a", "b", "c"]


def test_accepts_tokenseq_str_and_list():
    corpus = [("a", TokenSeq(tokens=["great", "heels"])), ("b", "flat shoes here")]
    index = build_bm25(corpus)
    assert bm25_score(index, "great heels", "a") == bm25_score(
        index, ["great", "heels"], "a"
    )
    assert bm25_topk(index, TokenSeq(tokens=["flat"]), 2)[0][0] == "b"


def test_build_errors():
    with pytest.raises(EmptyCorpus):
        build_bm25([])
    with pytest.raises(DuplicateDoc):
        build_bm25([("a", ["x"]), ("a", ["y"])])
    with pytest.raises(UnknownDoc):
        bm25_score(build_bm25([("a", ["x"])]), ["x"], "zzz")


def test_params_validation():
    with pytest.raises(ValueError):
        Bm25Params(k1=0.0)
    with pytest.raises(ValueError):
        Bm25Params(b=1.5)


def test_save_load_round_trip(tmp_path):
    rng = random.Random(7)
    corpus = make_corpus(rng, n_docs=40)
    index = build_bm25(corpus, Bm25Params(k1=1.4, b=0.6))
    path = tmp_path / "index.bm25"
    save_bm25(index, path)
    loaded = load_bm25(path)
    assert isinstance(loaded, Bm25Index)
    assert loaded.params == index.params
    assert loaded.doc_ids == index.doc_ids

    query = ["t1", "t5", "t5"]
    assert bm25_topk(loaded, query, 10) == bm25_topk(index, query, 10)

    # byte-stable: save(load(save(x))) reproduces the original bytes
    path2 = tmp_path / "index2.bm25"
    save_bm25(loaded, path2)
    assert path2.read_bytes() == path.read_bytes()
