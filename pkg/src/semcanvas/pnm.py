"""Binary PGM (P5) / PPM (P6) reading and writing.

16-bit PGMs are big-endian with maxval 65535.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np


def _header(kind: str, w: int, h: int, maxval: int) -> bytes:
    return f"{kind}\n{w} {h}\n{maxval}\n".encode("ascii")


def write_pgm(path, img: np.ndarray) -> None:
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError("PGM needs a 2-D image")
    h, w = img.shape
    if img.dtype == np.uint16:
        body = img.astype(">u2").tobytes()
        head = _header("P5", w, h, 65535)
    elif img.dtype == np.uint8:
        body = img.tobytes()
        head = _header("P5", w, h, 255)
    else:
        raise TypeError(f"unsupported PGM dtype {img.dtype}")
    _atomic_write(path, head + body)


def write_ppm(path, img: np.ndarray) -> None:
    img = np.asarray(img, dtype=np.uint8)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("PPM needs an (h, w, 3) image")
    h, w, _ = img.shape
    _atomic_write(path, _header("P6", w, h, 255) + np.ascontiguousarray(img).tobytes())


def _atomic_write(path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)


def _read_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens: list[bytes] = []
    i = 0
    n = len(data)
    while len(tokens) < count:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i < n and data[i : i + 1] == b"#":
            while i < n and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and not data[i : i + 1].isspace():
            i += 1
        if start == i:
            raise ValueError("truncated PNM header")
        tokens.append(data[start:i])
    # exactly one whitespace byte separates the header from the raster
    return tokens, i + 1


def read_pnm(path) -> np.ndarray:
    """Read P5 (uint8 or big-endian uint16) or P6 (uint8 RGB)."""
    data = Path(path).read_bytes()
    (magic, w, h, maxval), off = _read_tokens(data, 4)
    w, h, maxval = int(w), int(h), int(maxval)
    if magic not in (b"P5", b"P6") or not (0 < maxval < 65536):
        raise ValueError(f"unsupported PNM file {path}")
    channels = 3 if magic == b"P6" else 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
    expected = w * h * channels * dtype.itemsize
    raster = data[off : off + expected]
    if len(raster) != expected:
        raise ValueError(f"{path}: raster is {len(raster)} bytes, expected {expected}")
    arr = np.frombuffer(raster, dtype=dtype)
    arr = arr.astype(np.uint16 if maxval > 255 else np.uint8)
    return arr.reshape((h, w, 3) if channels == 3 else (h, w))
