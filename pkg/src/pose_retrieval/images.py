"""PFM (depth) and PGM (shaded) image files."""
from __future__ import annotations

import numpy as np

from .errors import FormatError


def write_pfm(path, img):
    """Grayscale little-endian PFM, rows stored bottom-up."""
    a = np.asarray(img, dtype="<f4")
    h, w = a.shape
    with open(path, "wb") as fh:
        fh.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        fh.write(np.ascontiguousarray(a[::-1]).tobytes())


def _read_header_tokens(fh, n):
    tokens = []
    while len(tokens) < n:
        line = fh.readline()
        if not line:
            raise FormatError("truncated header")
        line = line.split(b"#", 1)[0]
        tokens.extend(line.split())
    return tokens


def read_pfm(path):
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"Pf":
            raise FormatError(f"{path}: not a grayscale PFM")
        w, h = (int(x) for x in _read_header_tokens(fh, 2))
        scale = float(fh.readline().strip())
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(fh.read(4 * w * h), dtype=dtype)
    if data.size != w * h:
        raise FormatError(f"{path}: truncated pixel data")
    return data.reshape(h, w)[::-1].astype(np.float64)


def write_pgm(path, img):
    """8-bit binary PGM of an image in [0, 1]."""
    a = np.clip(np.rint(np.asarray(img, dtype=float) * 255.0), 0, 255).astype(np.uint8)
    h, w = a.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(a.tobytes())


def read_pgm(path):
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"P5":
            raise FormatError(f"{path}: not a binary PGM")
        w, h, maxval = (int(x) for x in _read_header_tokens(fh, 3))
        if maxval != 255:
            raise FormatError(f"{path}: only 8-bit PGM supported")
        data = np.frombuffer(fh.read(w * h), dtype=np.uint8)
    if data.size != w * h:
        raise FormatError(f"{path}: truncated pixel data")
    return data.reshape(h, w).astype(np.float64) / 255.0
