import sys

import numpy as np
import pytest

from semrec.encoder import EmbeddingMatrix, new_model
from semrec.ingest import CatalogItem, gen_synthetic


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance-gate verdict lines even when capture is on."""
    mod = sys.modules.get("test_acceptance") or sys.modules.get(
        "tests.test_acceptance"
    )
    lines = getattr(mod, "ACCEPTANCE_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


def make_items(n: int) -> list[CatalogItem]:
    return [
        CatalogItem(
            item_id=f"I{i:04d}",
            title=f"title{i} alpha beta",
            brand=f"brand{i % 3}",
            features=[f"feat{i}", "shared"],
            description=f"desc{i} gamma",
            price=float(10 + i),
            image_url=f"https://img.example/{i}.jpg",
        )
        for i in range(n)
    ]


def unit_rows(n: int, d: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((n, d))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v.astype(np.float32)


def unit_matrix(n: int, d: int, seed: int = 0) -> EmbeddingMatrix:
    return EmbeddingMatrix(
        ids=[f"I{i:05d}" for i in range(n)], vectors=unit_rows(n, d, seed)
    )


@pytest.fixture(scope="session")
def tiny_model():
    return new_model(hash_buckets=512, d_in=16, d_out=16, seed=7)


@pytest.fixture(scope="session")
def small_synth():
    """Small synthetic dataset shared by retrieval-level tests."""
    items, pairs = gen_synthetic(n_items=200, n_pairs=120, seed=11)
    return items, pairs
