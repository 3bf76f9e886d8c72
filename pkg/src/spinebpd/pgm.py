"""Binary PGM (P5, 8-bit) reading and writing."""

from __future__ import annotations

import os

import numpy as np

from .errors import DataFormatError


def encode_pgm(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise DataFormatError(f"PGM needs a 2-D array, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if arr.size and (arr.min() < 0 or arr.max() > 255):
            raise DataFormatError("PGM values must lie in 0..255")
        arr = arr.astype(np.uint8)
    h, w = arr.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(arr).tobytes()


def write_pgm(path: str | os.PathLike, arr: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(encode_pgm(arr))


def decode_pgm(data: bytes) -> np.ndarray:
    """Parse a P5 file with maxval <= 255. Header comments are skipped."""
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise DataFormatError("truncated PGM header")
        if data[pos:pos + 1] == b"#":
            end = data.find(b"\n", pos)
            pos = len(data) if end < 0 else end + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    if fields[0] != b"P5":
        raise DataFormatError(f"not a binary PGM (magic {fields[0]!r})")
    try:
        w, h, maxval = (int(x) for x in fields[1:])
    except ValueError as exc:
        raise DataFormatError(f"bad PGM header fields {fields[1:]}") from exc
    if not 0 < maxval <= 255:
        raise DataFormatError(f"unsupported PGM maxval {maxval}")
    pos += 1  # single whitespace byte after maxval
    pixels = data[pos:pos + w * h]
    if len(pixels) != w * h:
        raise DataFormatError(f"PGM payload has {len(pixels)} bytes, expected {w * h}")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w).copy()


def read_pgm(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as f:
        return decode_pgm(f.read())
