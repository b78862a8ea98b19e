"""Constant-time metadata lookup for search result enrichment.

The cache maps item_id to a small display record and serializes to a binary
file whose payload is covered by a CRC32, so a corrupted or truncated file
is rejected instead of silently serving bad metadata.
"""
from __future__ import annotations

import io
import zlib
from dataclasses import dataclass
from pathlib import Path

from . import binio
from .errors import ChecksumMismatch, DuplicateKey, VersionMismatch
from .ingest import CatalogItem

_MAGIC = b"MCH1"
_VERSION = 1

_HAS_BRAND = 1
_HAS_PRICE = 2
_HAS_IMAGE = 4


@dataclass
class DisplayRecord:
    item_id: str
    title: str
    brand: str | None = None
    price: float | None = None
    image_url: str | None = None


@dataclass
class MetadataCache:
    records: dict[str, DisplayRecord]

    def __len__(self) -> int:
        return len(self.records)


def build_cache(items: list[CatalogItem]) -> MetadataCache:
    records: dict[str, DisplayRecord] = {}
    for it in items:
        if it.item_id in records:
            raise DuplicateKey(f"duplicate item id {it.item_id!r}")
        records[it.item_id] = DisplayRecord(
            item_id=it.item_id,
            title=it.title,
            brand=it.brand,
            price=it.price,
            image_url=it.image_url,
        )
    return MetadataCache(records=records)


def lookup(cache: MetadataCache, item_id: str) -> DisplayRecord | None:
    """Dict access: O(1); None means the id is not in the cache."""
    return cache.records.get(item_id)


def save_cache(cache: MetadataCache, path: str | Path) -> None:
    payload = io.BytesIO()
    for rec in cache.records.values():
        binio.write_str(payload, rec.item_id)
        binio.write_str(payload, rec.title)
        flags = 0
        if rec.brand is not None:
            flags |= _HAS_BRAND
        if rec.price is not None:
            flags |= _HAS_PRICE
        if rec.image_url is not None:
            flags |= _HAS_IMAGE
        binio.write_u8(payload, flags)
        if rec.brand is not None:
            binio.write_str(payload, rec.brand)
        if rec.price is not None:
            binio.write_f64(payload, rec.price)
        if rec.image_url is not None:
            binio.write_str(payload, rec.image_url)
    body = payload.getvalue()
    with open(path, "wb") as f:
        f.write(_MAGIC)
        binio.write_u16(f, _VERSION)
        binio.write_u32(f, len(cache.records))
        binio.write_u32(f, zlib.crc32(body) & 0xFFFFFFFF)
        f.write(body)


def load_cache(path: str | Path) -> MetadataCache:
    with open(path, "rb") as f:
        binio.read_magic(f, _MAGIC)
        version = binio.read_u16(f)
        if version != _VERSION:
            raise VersionMismatch(f"unsupported MCH1 version {version}")
        n = binio.read_u32(f)
        expected = binio.read_u32(f)
        body = f.read()
    if (zlib.crc32(body) & 0xFFFFFFFF) != expected:
        raise ChecksumMismatch("metadata cache payload failed its CRC32 check")
    payload = io.BytesIO(body)
    records: dict[str, DisplayRecord] = {}
    for _ in range(n):
        item_id = binio.read_str(payload)
        title = binio.read_str(payload)
        flags = binio.read_u8(payload)
        brand = binio.read_str(payload) if flags & _HAS_BRAND else None
        price = binio.read_f64(payload) if flags & _HAS_PRICE else None
        image_url = binio.read_str(payload) if flags & _HAS_IMAGE else None
        if item_id in records:
            raise DuplicateKey(f"duplicate item id {item_id!r} in cache file")
        records[item_id] = DisplayRecord(
            item_id=item_id, title=title, brand=brand, price=price, image_url=image_url
        )
    return MetadataCache(records=records)
