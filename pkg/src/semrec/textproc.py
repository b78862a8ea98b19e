"""Deterministic tokenization and query/document text rendering.

The tokenizer is intentionally simple (lowercase, whitespace split, strip
edge punctuation): retrieval semantics only require that the same text always
produces the same tokens, on both the indexing and the query path.
"""
from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field

from .errors import EmptyReview, MissingTitle

SEP = "[SEP]"
MAX_SEQ_LEN = 500
MAX_DOC_CHARS = 1200
HARD_QUERY_BODY_TOKENS = 20


@dataclass
class TokenSeq:
    """A tokenized text: lowercase tokens, no empties.

    truncated_at records the cut length when truncate_tokens shortened the
    sequence; None means the sequence is untruncated.
    """

    tokens: list[str] = field(default_factory=list)
    truncated_at: int | None = None

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def _strip_punct(token: str) -> str:
    start = 0
    end = len(token)
    while start < end and _is_punct(token[start]):
        start += 1
    while end > start and _is_punct(token[end - 1]):
        end -= 1
    return token[start:end]


def tokenize(text: str) -> TokenSeq:
    """Lowercase, split on Unicode whitespace, strip edge punctuation, drop empties."""
    tokens = []
    for raw in text.lower().split():
        tok = _strip_punct(raw)
        if tok:
            tokens.append(tok)
    return TokenSeq(tokens=tokens)


def truncate_tokens(seq: TokenSeq, max_len: int = MAX_SEQ_LEN) -> TokenSeq:
    """Keep the first max_len tokens; mark truncated_at when anything was cut."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    if len(seq.tokens) <= max_len:
        return TokenSeq(tokens=list(seq.tokens), truncated_at=seq.truncated_at)
    return TokenSeq(tokens=seq.tokens[:max_len], truncated_at=max_len)


def render_document(item, max_chars: int = MAX_DOC_CHARS) -> str:
    """Render "title [SEP] brand [SEP] features" and hard-truncate by characters.

    Missing brand/features contribute an empty segment with separators kept,
    so segment positions are stable across items.  Truncation happens after
    the separators are inserted.
    """
    if not item.title:
        raise MissingTitle(f"item {item.item_id!r} has no title")
    brand = item.brand or ""
    features = "; ".join(item.features or [])
    rendered = f"{item.title} {SEP} {brand} {SEP} {features}"
    return rendered[:max_chars]


def render_query(review, mode: str = "train") -> str:
    """Render a review as retrieval query text.

    train: summary and body joined by a space (non-empty parts only).
    eval_hard: the summary alone, falling back to the first 20 body tokens
    when the summary is empty.
    """
    summary = review.summary or ""
    body = review.body or ""
    if not summary and not body:
        raise EmptyReview(f"review by {review.user_id!r} has no text")
    if mode == "train":
        return " ".join(part for part in (summary, body) if part)
    if mode == "eval_hard":
        if summary:
            return summary
        return " ".join(tokenize(body).tokens[:HARD_QUERY_BODY_TOKENS])
    raise ValueError(f"unknown render mode {mode!r}")


def ascii_letter_ratio(text: str) -> float:
    """Share of ASCII letters among alphabetic characters (1.0 if none).

    Cheap stand-in for language identification: text whose alphabetic
    characters are mostly non-ASCII is treated as non-English by the ingest
    filter when that (off-by-default) stage is enabled.
    """
    alpha = [ch for ch in text if ch.isalpha()]
    if not alpha:
        return 1.0
    ascii_alpha = sum(1 for ch in alpha if ch.isascii())
    return ascii_alpha / len(alpha)
