"""Little-endian binary I/O helpers shared by all artifact formats.

Every on-disk artifact (ENC1, QNT1, EMB1, HNS1, BM25, MCH1) is built from the
same primitives: a 4-byte magic, a u16 version, fixed-width little-endian
scalars, u32-length-prefixed UTF-8 strings, and LEB128 varints for adjacency
lists.  Readers raise BadMagic / VersionMismatch instead of crashing on
truncated or foreign files.
"""
from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np

from .errors import BadMagic, VersionMismatch


def write_magic(f: BinaryIO, magic: bytes) -> None:
    assert len(magic) == 4
    f.write(magic)


def read_magic(f: BinaryIO, expected: bytes) -> None:
    got = f.read(4)
    if got != expected:
        raise BadMagic(f"expected magic {expected!r}, got {got!r}")


def write_u8(f: BinaryIO, v: int) -> None:
    f.write(struct.pack("<B", v))


def write_u16(f: BinaryIO, v: int) -> None:
    f.write(struct.pack("<H", v))


def write_u32(f: BinaryIO, v: int) -> None:
    f.write(struct.pack("<I", v))


def write_u64(f: BinaryIO, v: int) -> None:
    f.write(struct.pack("<Q", v))


def write_i64(f: BinaryIO, v: int) -> None:
    f.write(struct.pack("<q", v))


def write_f32(f: BinaryIO, v: float) -> None:
    f.write(struct.pack("<f", v))


def write_f64(f: BinaryIO, v: float) -> None:
    f.write(struct.pack("<d", v))


def _read_exact(f: BinaryIO, n: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise VersionMismatch(f"truncated file: wanted {n} bytes, got {len(data)}")
    return data


def read_u8(f: BinaryIO) -> int:
    return struct.unpack("<B", _read_exact(f, 1))[0]


def read_u16(f: BinaryIO) -> int:
    return struct.unpack("<H", _read_exact(f, 2))[0]


def read_u32(f: BinaryIO) -> int:
    return struct.unpack("<I", _read_exact(f, 4))[0]


def read_u64(f: BinaryIO) -> int:
    return struct.unpack("<Q", _read_exact(f, 8))[0]


def read_i64(f: BinaryIO) -> int:
    return struct.unpack("<q", _read_exact(f, 8))[0]


def read_f32(f: BinaryIO) -> float:
    return struct.unpack("<f", _read_exact(f, 4))[0]


def read_f64(f: BinaryIO) -> float:
    return struct.unpack("<d", _read_exact(f, 8))[0]


def write_str(f: BinaryIO, s: str) -> None:
    data = s.encode("utf-8")
    write_u32(f, len(data))
    f.write(data)


def read_str(f: BinaryIO) -> str:
    n = read_u32(f)
    return _read_exact(f, n).decode("utf-8")


def write_varint(f: BinaryIO, v: int) -> None:
    """Unsigned LEB128."""
    if v < 0:
        raise ValueError("varint must be non-negative")
    while True:
        byte = v & 0x7F
        v >>= 7
        if v:
            f.write(bytes([byte | 0x80]))
        else:
            f.write(bytes([byte]))
            return


def read_varint(f: BinaryIO) -> int:
    result = 0
    shift = 0
    while True:
        byte = _read_exact(f, 1)[0]
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result
        shift += 7
        if shift > 63:
            raise VersionMismatch("varint too long")


def write_array(f: BinaryIO, arr: np.ndarray, dtype: str) -> None:
    """Raw array bytes in a fixed little-endian dtype (e.g. '<f4', '<i1')."""
    f.write(np.ascontiguousarray(arr, dtype=np.dtype(dtype)).tobytes())


def read_array(f: BinaryIO, dtype: str, shape: int | tuple[int, ...]) -> np.ndarray:
    """Read a raw array of the given shape back; always returns a copy."""
    if isinstance(shape, int):
        shape = (shape,)
    count = 1
    for dim in shape:
        count *= dim
    itemsize = np.dtype(dtype).itemsize
    data = _read_exact(f, itemsize * count)
    return np.frombuffer(data, dtype=np.dtype(dtype)).reshape(shape).copy()
