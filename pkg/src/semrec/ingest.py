"""Raw data parsing, the multi-stage interaction filter, leak-free splitting,
and the synthetic vocabulary-mismatch benchmark generator.

The on-disk interchange formats are plain JSONL: one review / catalog item /
interaction pair per line.  Raw review dumps are adapted through configurable
field maps instead of hard-coded key names.
"""
from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .errors import FormatError, TooFewPairs
from .textproc import ascii_letter_ratio, render_query, tokenize


@dataclass
class Review:
    user_id: str
    item_id: str
    rating: float
    summary: str
    body: str


@dataclass
class CatalogItem:
    item_id: str
    title: str
    brand: str | None = None
    features: list[str] = field(default_factory=list)
    description: str | None = None
    price: float | None = None
    image_url: str | None = None


@dataclass
class InteractionPair:
    query_text: str
    item_id: str
    user_id: str
    rating: float


@dataclass
class SplitSpec:
    train_fraction: float = 0.95
    seed: int = 42

    def __post_init__(self) -> None:
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must be in (0, 1)")


@dataclass
class ReviewFieldMap:
    """Key names in a raw reviews JSONL file (defaults fit the 2023 dump)."""

    rating: str = "rating"
    summary: str = "title"
    body: str = "text"
    item_id: str = "asin"
    user_id: str = "user_id"


@dataclass
class CatalogFieldMap:
    """Key names in a raw item-metadata JSONL file."""

    item_id: str = "parent_asin"
    title: str = "title"
    brand: str = "store"
    features: str = "features"
    description: str = "description"
    price: str = "price"
    image_url: str = "image_url"


@dataclass
class FilterConfig:
    min_rating: float = 4.0
    min_body_tokens: int = 5
    min_user_pairs: int = 3
    english_filter: bool = False
    ascii_threshold: float = 0.9
    query_mode: str = "train"


@dataclass
class ParsedFile:
    """Parse result: surviving records plus malformed-line accounting."""

    records: list
    skipped: int
    total_lines: int


def _parse_jsonl(path: str | Path, convert) -> ParsedFile:
    records = []
    skipped = 0
    total = 0
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            total += 1
            try:
                obj = json.loads(line)
                records.append(convert(obj))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                skipped += 1
    if total > 0 and skipped > total / 2:
        raise FormatError(f"{path}: {skipped}/{total} lines malformed")
    return ParsedFile(records=records, skipped=skipped, total_lines=total)


def parse_reviews(path: str | Path, mapping: ReviewFieldMap | None = None) -> ParsedFile:
    """Read a reviews JSONL file; malformed lines are counted and skipped."""
    m = mapping or ReviewFieldMap()

    def convert(obj: dict) -> Review:
        return Review(
            user_id=str(obj[m.user_id]),
            item_id=str(obj[m.item_id]),
            rating=float(obj[m.rating]),
            summary=str(obj.get(m.summary) or ""),
            body=str(obj.get(m.body) or ""),
        )

    return _parse_jsonl(path, convert)


def _as_text(value) -> str:
    if value is None:
        return ""
    if isinstance(value, list):
        return " ".join(str(v) for v in value)
    return str(value)


def parse_catalog(path: str | Path, mapping: CatalogFieldMap | None = None) -> ParsedFile:
    """Read an item-metadata JSONL file into CatalogItems."""
    m = mapping or CatalogFieldMap()

    def convert(obj: dict) -> CatalogItem:
        features = obj.get(m.features) or []
        if not isinstance(features, list):
            features = [str(features)]
        price = obj.get(m.price)
        return CatalogItem(
            item_id=str(obj[m.item_id]),
            title=str(obj.get(m.title) or ""),
            brand=(str(obj[m.brand]) if obj.get(m.brand) else None),
            features=[str(x) for x in features],
            description=_as_text(obj.get(m.description)) or None,
            price=(float(price) if price not in (None, "") else None),
            image_url=(str(obj[m.image_url]) if obj.get(m.image_url) else None),
        )

    return _parse_jsonl(path, convert)


def filter_reviews(
    reviews: list[Review],
    catalog: dict[str, CatalogItem],
    cfg: FilterConfig | None = None,
) -> list[Review]:
    """Apply the four filter stages and return the surviving reviews.

    Stages: (1) rating threshold, (2) language/length, (3) dedup + per-user
    minimum, (4) catalog join.  The per-user minimum is re-checked once after
    the join, because join removals can drop a user below the threshold; the
    result is a fixed point of the whole filter.
    """
    cfg = cfg or FilterConfig()

    survivors = [r for r in reviews if r.rating >= cfg.min_rating]

    kept = []
    for r in survivors:
        if len(tokenize(r.body)) < cfg.min_body_tokens:
            continue
        if cfg.english_filter:
            if ascii_letter_ratio(r.summary + " " + r.body) < cfg.ascii_threshold:
                continue
        kept.append(r)
    survivors = kept

    # Dedup (user, item): highest rating wins, earliest-seen breaks ties.
    best: dict[tuple[str, str], Review] = {}
    order: list[tuple[str, str]] = []
    for r in survivors:
        key = (r.user_id, r.item_id)
        if key not in best:
            best[key] = r
            order.append(key)
        elif r.rating > best[key].rating:
            best[key] = r
    survivors = [best[k] for k in order]
    survivors = _drop_sparse_users(survivors, cfg.min_user_pairs)

    kept = []
    for r in survivors:
        item = catalog.get(r.item_id)
        if item is not None and item.title and item.description:
            kept.append(r)
    survivors = kept

    return _drop_sparse_users(survivors, cfg.min_user_pairs)


def _drop_sparse_users(reviews: list[Review], min_pairs: int) -> list[Review]:
    counts: dict[str, int] = {}
    for r in reviews:
        counts[r.user_id] = counts.get(r.user_id, 0) + 1
    return [r for r in reviews if counts[r.user_id] >= min_pairs]


def filter_interactions(
    reviews: list[Review],
    catalog: dict[str, CatalogItem],
    cfg: FilterConfig | None = None,
) -> list[InteractionPair]:
    """Run the filter pipeline and render surviving reviews into (q, d) pairs."""
    cfg = cfg or FilterConfig()
    return [
        InteractionPair(
            query_text=render_query(r, cfg.query_mode),
            item_id=r.item_id,
            user_id=r.user_id,
            rating=r.rating,
        )
        for r in filter_reviews(reviews, catalog, cfg)
    ]


def split_pairs(
    pairs: list[InteractionPair], spec: SplitSpec | None = None
) -> tuple[list[InteractionPair], list[InteractionPair]]:
    """Stratified interaction-level split with a leakage guarantee.

    Pairs are shuffled within per-user groups and allocated proportionally so
    |train| = round(train_fraction * |pairs|) when all (query_text, item_id)
    keys are unique.  Any test pair whose key also landed in train is moved to
    train, so the two sides never share a key.
    """
    spec = spec or SplitSpec()
    n = len(pairs)
    if n < 2:
        raise TooFewPairs(f"need at least 2 pairs, got {n}")

    n_train = int(spec.train_fraction * n + 0.5)
    rng = random.Random(spec.seed)

    groups: dict[str, list[InteractionPair]] = {}
    user_order: list[str] = []
    for p in pairs:
        if p.user_id not in groups:
            groups[p.user_id] = []
            user_order.append(p.user_id)
        groups[p.user_id].append(p)

    # Largest-remainder allocation of the train quota across users.
    base: dict[str, int] = {}
    remainders: list[tuple[float, str]] = []
    for u in user_order:
        ideal = spec.train_fraction * len(groups[u])
        base[u] = int(ideal)
        remainders.append((ideal - base[u], u))
    leftover = n_train - sum(base.values())
    remainders.sort(key=lambda t: (-t[0], t[1]))
    for _, u in remainders:
        if leftover <= 0:
            break
        if base[u] < len(groups[u]):
            base[u] += 1
            leftover -= 1

    train: list[InteractionPair] = []
    test: list[InteractionPair] = []
    for u in user_order:
        group = list(groups[u])
        rng.shuffle(group)
        train.extend(group[: base[u]])
        test.extend(group[base[u]:])

    train_keys = {(p.query_text, p.item_id) for p in train}
    moved = [p for p in test if (p.query_text, p.item_id) in train_keys]
    if moved:
        test = [p for p in test if (p.query_text, p.item_id) not in train_keys]
        train.extend(moved)
    return train, test


# --- synthetic vocabulary-mismatch benchmark ---

_WORDS_PER_SIDE = 4
_CONCEPTS_PER_ITEM = 3
_TITLE_WORDS_PER_CONCEPT = 2
_QUERY_WORDS_PER_CONCEPT = 2


def gen_synthetic(
    n_items: int,
    n_pairs: int,
    vocab_size: int = 480,
    mismatch_rate: float = 0.9,
    seed: int = 42,
) -> tuple[list[CatalogItem], list[InteractionPair]]:
    """Generate a catalog and query pairs with a controlled vocabulary gap.

    Each item carries latent concepts.  Item text (title, features,
    description) uses a "technical" vocabulary per concept; each query token
    is drawn from a disjoint "colloquial" vocabulary for the same concept
    with probability mismatch_rate, otherwise from the positive item's own
    title words.  mismatch_rate=1.0 therefore forces zero query/title token
    overlap, while mismatch_rate=0.0 guarantees overlap.
    """
    if n_items < 10:
        raise ValueError("n_items must be >= 10")
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")

    rng = random.Random(seed)
    n_concepts = max(4, vocab_size // (2 * _WORDS_PER_SIDE))
    tech = [[f"tech{c}w{j}" for j in range(_WORDS_PER_SIDE)] for c in range(n_concepts)]
    talk = [[f"talk{c}w{j}" for j in range(_WORDS_PER_SIDE)] for c in range(n_concepts)]
    n_brands = max(2, n_items // 100)

    catalog: list[CatalogItem] = []
    item_concepts: list[list[int]] = []
    item_title_words: list[dict[int, list[str]]] = []
    for i in range(n_items):
        concepts = rng.sample(range(n_concepts), _CONCEPTS_PER_ITEM)
        title_words: dict[int, list[str]] = {
            c: rng.sample(tech[c], _TITLE_WORDS_PER_CONCEPT) for c in concepts
        }
        title = " ".join(w for c in concepts for w in title_words[c])
        features = [" ".join(rng.sample(tech[c], 2)) for c in concepts[:2]]
        description = " ".join(rng.choice(tech[c]) for c in concepts for _ in range(2))
        catalog.append(
            CatalogItem(
                item_id=f"I{i:06d}",
                title=title,
                brand=f"brand{rng.randrange(n_brands)}",
                features=features,
                description=description,
                price=round(rng.uniform(5.0, 200.0), 2),
                image_url=f"https://img.example/I{i:06d}.jpg",
            )
        )
        item_concepts.append(concepts)
        item_title_words.append(title_words)

    n_users = max(1, n_pairs // 4)
    pairs: list[InteractionPair] = []
    for p in range(n_pairs):
        idx = rng.randrange(n_items)
        tokens = []
        for c in item_concepts[idx]:
            for _ in range(_QUERY_WORDS_PER_CONCEPT):
                if rng.random() < mismatch_rate:
                    tokens.append(rng.choice(talk[c]))
                else:
                    tokens.append(rng.choice(item_title_words[idx][c]))
        rng.shuffle(tokens)
        pairs.append(
            InteractionPair(
                query_text=" ".join(tokens),
                item_id=catalog[idx].item_id,
                user_id=f"user{p % n_users}",
                rating=float(rng.choice((4, 5))),
            )
        )
    return catalog, pairs


# --- canonical JSONL I/O ---

def write_catalog(items: list[CatalogItem], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for it in items:
            f.write(json.dumps({
                "item_id": it.item_id,
                "title": it.title,
                "brand": it.brand,
                "features": it.features,
                "description": it.description,
                "price": it.price,
                "image_url": it.image_url,
            }, sort_keys=True) + "\n")


def load_catalog(path: str | Path) -> list[CatalogItem]:
    items = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            obj = json.loads(line)
            items.append(CatalogItem(
                item_id=obj["item_id"],
                title=obj["title"],
                brand=obj.get("brand"),
                features=obj.get("features") or [],
                description=obj.get("description"),
                price=obj.get("price"),
                image_url=obj.get("image_url"),
            ))
    return items


def catalog_by_id(items: list[CatalogItem]) -> dict[str, CatalogItem]:
    return {it.item_id: it for it in items}


def write_pairs(pairs: list[InteractionPair], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for p in pairs:
            f.write(json.dumps({
                "query_text": p.query_text,
                "item_id": p.item_id,
                "user_id": p.user_id,
                "rating": p.rating,
            }, sort_keys=True) + "\n")


def load_pairs(path: str | Path) -> list[InteractionPair]:
    pairs = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            obj = json.loads(line)
            pairs.append(InteractionPair(
                query_text=obj["query_text"],
                item_id=obj["item_id"],
                user_id=obj["user_id"],
                rating=float(obj["rating"]),
            ))
    return pairs


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_split_manifest(
    path: str | Path,
    spec: SplitSpec,
    n_pairs: int,
    train_path: str | Path,
    test_path: str | Path,
) -> None:
    manifest = {
        "seed": spec.seed,
        "train_fraction": spec.train_fraction,
        "n_pairs": n_pairs,
        "checksums": {
            "train": file_sha256(train_path),
            "test": file_sha256(test_path),
        },
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
