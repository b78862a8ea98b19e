import dataclasses
import json
import os

import pytest
from fastapi.testclient import TestClient

from semrec.app.cli import main
from semrec.app.config import SystemConfig, config_from_dict, load_config
from semrec.app.server import create_app
from semrec.errors import FormatError


# --- config ---


def test_config_defaults():
    cfg = load_config(None)
    assert cfg.serving.host == "127.0.0.1"
    assert cfg.serving.port == 8000
    assert cfg.serving.default_mode == "hybrid"
    assert cfg.encoder.d_out == 64
    assert cfg.paths.catalog.startswith("artifacts")
    assert cfg.seed == 42


def test_config_partial_override():
    cfg = config_from_dict({"serving": {"port": 9001, "default_k": 5}, "seed": 7})
    assert cfg.serving.port == 9001
    assert cfg.serving.default_k == 5
    assert cfg.serving.host == "127.0.0.1"  # untouched sections keep defaults
    assert cfg.seed == 7


@pytest.mark.parametrize(
    "raw",
    [
        {"bogus": {}},
        {"serving": {"bogus": 1}},
        {"serving": {"port": 0}},
        {"serving": "not a dict"},
        {"seed": "42"},
        {"encoder": {"d_out": -1}},
    ],
)
def test_config_rejects_bad_input(raw):
    with pytest.raises(FormatError):
        config_from_dict(raw)


def test_config_file_loading(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"serving": {"port": 9100}}), encoding="utf-8")
    assert load_config(path).serving.port == 9100
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(FormatError):
        load_config(path)


def test_env_overrides(monkeypatch):
    monkeypatch.setenv("SEMREC_HOST", "0.0.0.0")
    monkeypatch.setenv("SEMREC_PORT", "8123")
    cfg = load_config(None)
    assert cfg.serving.host == "0.0.0.0"
    assert cfg.serving.port == 8123
    monkeypatch.setenv("SEMREC_PORT", "not-a-port")
    with pytest.raises(FormatError):
        load_config(None)
    monkeypatch.setenv("SEMREC_PORT", "70000")
    with pytest.raises(FormatError):
        load_config(None)


# --- CLI pipeline ---


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    """Run the full artifact pipeline once in a scratch directory."""
    root = tmp_path_factory.mktemp("app_pipeline")
    prev = os.getcwd()
    os.chdir(root)
    try:
        steps = [
            ["synth", "--items", "150", "--pairs", "200", "--seed", "42"],
            ["split", "--fraction", "0.9", "--seed", "42"],
            ["train", "--epochs", "2", "--lr", "2e-3", "--seed", "42"],
            ["quantize"],
            ["embed", "--quantized"],
            ["index-build", "--engine", "hnsw"],
            ["index-build", "--engine", "flat"],
            ["index-build", "--engine", "sparse"],
            ["cache-build"],
        ]
        for argv in steps:
            assert main(argv) == 0, f"step failed: {argv}"
    finally:
        os.chdir(prev)
    return root


def _query_from_catalog(root) -> str:
    line = (root / "artifacts" / "catalog.jsonl").read_text().splitlines()[0]
    return json.loads(line)["title"].split()[0]


def test_cli_search(pipeline_dir, monkeypatch, capsys):
    monkeypatch.chdir(pipeline_dir)
    q = _query_from_catalog(pipeline_dir)
    assert main(["search", "--query", q, "--k", "5", "--mode", "hybrid"]) == 0
    out = capsys.readouterr().out
    assert "1." in out or "1 " in out
    assert len(out.strip().splitlines()) >= 2


def test_cli_eval_table(pipeline_dir, monkeypatch, capsys):
    monkeypatch.chdir(pipeline_dir)
    assert main(["eval", "--k", "5"]) == 0
    out = capsys.readouterr().out.lower()
    assert "bm25" in out and "dense-trained" in out
    assert "recall" in out


def test_cli_ablate_table(pipeline_dir, monkeypatch, capsys):
    monkeypatch.chdir(pipeline_dir)
    assert main(["ablate", "--k", "5"]) == 0
    out = capsys.readouterr().out.lower()
    assert "int8" in out
    assert "bytes" in out or "size" in out or "mb" in out


def test_cli_bench(pipeline_dir, monkeypatch, capsys):
    monkeypatch.chdir(pipeline_dir)
    assert main(["bench", "--n-queries", "4", "--warmup", "2", "--repeat", "10"]) == 0
    out = capsys.readouterr().out.lower()
    assert "p50" in out and "p99" in out and "qps" in out


def test_cli_exit_codes(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert main([]) == 1                       # no command: help + usage exit
    assert main(["bogus-command"]) == 1        # unknown command
    assert main(["synth"]) == 1                # missing required flags
    assert main(["--config", "missing.json", "cache-build"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{oops", encoding="utf-8")
    assert main(["--config", str(bad), "cache-build"]) == 2
    assert main(["search", "--query", "x"]) == 2  # artifacts absent
    capsys.readouterr()


# --- HTTP API ---


def _abs_config(root) -> SystemConfig:
    cfg = SystemConfig()
    for f in dataclasses.fields(cfg.paths):
        setattr(cfg.paths, f.name, str(root / getattr(cfg.paths, f.name)))
    return cfg


@pytest.fixture(scope="module")
def api(pipeline_dir):
    cfg = _abs_config(pipeline_dir)
    app = create_app(cfg, preload=True)
    with TestClient(app) as client:
        yield client, cfg, pipeline_dir


def _is_sig6(x: float) -> bool:
    return float(f"{x:.6g}") == x


def test_health(api):
    client, cfg, root = api
    res = client.get("/health")
    assert res.status_code == 200
    body = res.json()
    assert body["status"] == "ok"
    assert body["n_items"] == 150
    assert isinstance(body["dims"], dict)
    assert body["checksums"] and all(
        len(v) == 64 and set(v) <= set("0123456789abcdef")
        for v in body["checksums"].values()
    )


def test_search_contract(api):
    client, cfg, root = api
    q = _query_from_catalog(root)
    res = client.post("/search", json={"query": q, "k": 5, "mode": "hybrid"})
    assert res.status_code == 200
    body = res.json()
    rows = body["results"]
    assert 1 <= len(rows) <= 5
    assert [r["rank"] for r in rows] == list(range(1, len(rows) + 1))
    scores = [r["score"] for r in rows]
    assert scores == sorted(scores, reverse=True)
    for r in rows:
        assert r["item_id"] and r["title"] is not None
        assert set(r["source_scores"]) <= {"dense", "sparse"}
        assert _is_sig6(r["score"])
        assert all(_is_sig6(v) for v in r["source_scores"].values())
    t = body["timings_ms"]
    assert set(t) == {"encode", "search", "lookup", "total"}
    assert all(_is_sig6(v) and v >= 0 for v in t.values())


def test_search_defaults(api):
    client, cfg, root = api
    res = client.post("/search", json={"query": _query_from_catalog(root)})
    assert res.status_code == 200
    assert len(res.json()["results"]) <= cfg.serving.default_k


@pytest.mark.parametrize(
    "payload",
    [
        {},
        {"query": "   "},
        {"query": "x", "k": 0},
        {"query": "x", "k": "five"},
        {"query": "x", "mode": "psychic"},
        {"query": "x", "lambda": 1.5},
        {"query": "x", "engine": "warp"},
        {"query": "x", "ef_search": 0},
        {"query": "x", "unexpected": True},
        {"query": "x", "filters": {"color": "red"}},
        {"query": "x", "filters": "brand=Nike"},
    ],
)
def test_search_bad_requests(api, payload):
    client, _, _ = api
    assert client.post("/search", json=payload).status_code == 400


def test_search_filters(api):
    client, cfg, root = api
    line = (root / "artifacts" / "catalog.jsonl").read_text().splitlines()[0]
    rec = json.loads(line)
    res = client.post(
        "/search",
        json={
            "query": rec["title"].split()[0],
            "k": 5,
            "filters": {"brand": rec["brand"].upper()},  # case-insensitive match
        },
    )
    assert res.status_code == 200
    for row in res.json()["results"]:
        assert row["brand"].lower() == rec["brand"].lower()


def test_item_lookup(api):
    client, cfg, root = api
    line = (root / "artifacts" / "catalog.jsonl").read_text().splitlines()[0]
    rec = json.loads(line)
    res = client.get(f"/item/{rec['item_id']}")
    assert res.status_code == 200
    body = res.json()
    assert body["item_id"] == rec["item_id"]
    assert body["title"] == rec["title"]
    assert client.get("/item/definitely-not-an-id").status_code == 404


def test_ab_identical_configs_full_overlap(api):
    client, cfg, root = api
    q = _query_from_catalog(root)
    side = {"mode": "hybrid", "lambda": 0.5}
    res = client.post(
        "/ab",
        json={"queries": [q, q + " extra"], "config_a": side, "config_b": dict(side)},
    )
    assert res.status_code == 200
    body = res.json()
    assert body["n_queries"] == 2
    for name in ("config_a", "config_b"):
        stats = body[name]
        assert set(stats) == {"p50", "p99", "qps", "recall_overlap@10"}
        assert stats["recall_overlap@10"] == 1.0
        assert stats["p50"] <= stats["p99"]
        assert stats["qps"] > 0


def test_ab_contrasting_configs(api):
    client, cfg, root = api
    q = _query_from_catalog(root)
    res = client.post(
        "/ab",
        json={
            "queries": [q],
            "config_a": {"mode": "dense", "engine": "flat"},
            "config_b": {"mode": "sparse"},
        },
    )
    assert res.status_code == 200
    overlap = res.json()["config_a"]["recall_overlap@10"]
    assert 0.0 <= overlap <= 1.0


@pytest.mark.parametrize(
    "payload",
    [
        {},
        {"queries": []},
        {"queries": ["ok"], "config_a": {"k": 3}},        # k is fixed server-side
        {"queries": ["ok"], "config_a": {"mode": "nope"}},
        {"queries": [""], "config_a": {}},
        {"queries": ["ok"], "extra": 1},
    ],
)
def test_ab_bad_requests(api, payload):
    client, _, _ = api
    assert client.post("/ab", json=payload).status_code == 400


def test_request_log_fields(api):
    client, cfg, root = api
    client.post("/search", json={"query": _query_from_catalog(root), "k": 3})
    lines = open(cfg.paths.request_log, encoding="utf-8").read().strip().splitlines()
    assert lines
    entry = json.loads(lines[-1])
    assert set(entry) == {"route", "latency_ms", "k", "mode"}
    assert entry["route"] in {"/search", "/ab", "/item", "/health"}
    assert entry["latency_ms"] >= 0


def test_not_ready_returns_503(tmp_path):
    app = create_app(_abs_config(tmp_path), preload=False)
    with TestClient(app) as client:
        res = client.get("/health")
        assert res.status_code == 503
        assert res.json()["status"] == "loading"
        assert client.post("/search", json={"query": "x"}).status_code == 503
