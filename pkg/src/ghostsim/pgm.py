"""Minimal PGM writers and reader (P2 ASCII, P5 binary up to 16 bit)."""
from __future__ import annotations

import os

import numpy as np

from .errors import OutputError


def _scaled(image: np.ndarray, maxval: int) -> np.ndarray:
    img = np.atleast_2d(np.asarray(image, dtype=float))
    img = np.where(np.isfinite(img), img, 0.0).clip(min=0.0)
    peak = img.max() if img.size else 0.0
    if peak <= 0:
        return np.zeros(img.shape, dtype=np.int64)
    return np.floor(img * (maxval / peak) + 0.5).astype(np.int64)


def write_pgm_p5(path, image, maxval: int = 65535) -> None:
    """Binary PGM; data scaled so the image maximum maps to ``maxval``.

    Negative and non-finite values are written as zero. Samples wider than one
    byte are big-endian, as the format requires.
    """
    px = _scaled(image, maxval)
    h, w = px.shape
    dtype = ">u2" if maxval > 255 else "u1"
    try:
        with open(path, "wb") as fh:
            fh.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
            fh.write(px.astype(dtype).tobytes())
    except OSError as exc:
        raise OutputError(f"cannot write {os.fspath(path)}: {exc.strerror or exc}") from exc


def write_pgm_p2(path, image, maxval: int = 255) -> None:
    """ASCII PGM for small images; a 1-D array becomes a single row."""
    px = _scaled(image, maxval)
    h, w = px.shape
    lines = [f"P2\n{w} {h}\n{maxval}\n"]
    lines += [" ".join(str(v) for v in row) + "\n" for row in px]
    try:
        with open(path, "w", encoding="ascii") as fh:
            fh.writelines(lines)
    except OSError as exc:
        raise OutputError(f"cannot write {os.fspath(path)}: {exc.strerror or exc}") from exc


def read_pgm(path) -> tuple[np.ndarray, int]:
    """Read a P2 or P5 file written by this module; returns ``(pixels, maxval)``."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic = data[:2]
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(int(data[start:pos]))
    w, h, maxval = tokens
    if magic == b"P5":
        dtype = ">u2" if maxval > 255 else "u1"
        px = np.frombuffer(data[pos + 1:], dtype=dtype, count=w * h)
    elif magic == b"P2":
        px = np.array(data[pos:].split(), dtype=np.int64)
    else:
        raise ValueError(f"not a PGM file: {magic!r}")
    return px.reshape(h, w).astype(np.int64), maxval
