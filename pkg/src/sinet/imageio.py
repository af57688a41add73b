"""Binary PGM (P5) / PPM (P6) raster I/O, 8 bits per sample.

A file is ``P5`` or ``P6``, whitespace, width, height and maxval (255) as
ASCII decimals, one whitespace byte, then ``height * width * channels`` raw
bytes in row-major order.  ``#`` comments are allowed in the header.
Masks are stored as P5 with values 0 and 255.
"""

import numpy as np

from .errors import InputError


def write_pnm(path, array):
    """Write ``(h, w)`` uint8 as P5 or ``(h, w, 3)`` uint8 as P6."""
    a = np.asarray(array)
    if a.dtype != np.uint8:
        raise InputError(f"PNM data must be uint8, got {a.dtype}")
    if a.ndim == 2:
        magic = b"P5"
    elif a.ndim == 3 and a.shape[2] == 3:
        magic = b"P6"
    else:
        raise InputError(f"expected (h, w) or (h, w, 3), got {a.shape}")
    h, w = a.shape[:2]
    with open(path, "wb") as fh:
        fh.write(magic + f"\n{w} {h}\n255\n".encode())
        fh.write(np.ascontiguousarray(a).tobytes())


def _tokens(raw, count, start):
    out, i = [], start
    while len(out) < count:
        while i < len(raw) and raw[i:i + 1].isspace():
            i += 1
        if raw[i:i + 1] == b"#":
            while i < len(raw) and raw[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(raw) and not raw[j:j + 1].isspace():
            j += 1
        if j == i:
            raise InputError("truncated PNM header")
        out.append(raw[i:j])
        i = j
    return out, i + 1  # exactly one whitespace byte before the raster


def read_pnm(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    magic = raw[:2]
    if magic not in (b"P5", b"P6"):
        raise InputError(f"{path}: not a binary PGM/PPM file")
    (w, h, maxval), off = _tokens(raw, 3, 2)
    w, h, maxval = int(w), int(h), int(maxval)
    if maxval != 255:
        raise InputError(f"{path}: only 8-bit files are supported (maxval {maxval})")
    c = 1 if magic == b"P5" else 3
    n = w * h * c
    if len(raw) - off < n:
        raise InputError(f"{path}: raster has {len(raw) - off} bytes, expected {n}")
    data = np.frombuffer(raw, dtype=np.uint8, count=n, offset=off)
    return data.reshape((h, w) if c == 1 else (h, w, 3)).copy()


def write_mask(path, mask):
    m = np.asarray(mask)
    if not np.isin(m, (0, 1)).all():
        raise InputError("mask must be binary")
    write_pnm(path, (m * 255).astype(np.uint8))


def read_mask(path):
    m = read_pnm(path)
    if m.ndim != 2 or not np.isin(m, (0, 255)).all():
        raise InputError(f"{path}: mask must be a 0/255 grayscale image")
    return (m // 255).astype(np.uint8)


def to_chw(image):
    """uint8 ``(h, w[, 3])`` -> float32 ``(3, h, w)`` in [0, 1]; grey is replicated."""
    a = np.asarray(image, dtype=np.float32) / 255.0
    if a.ndim == 2:
        a = np.repeat(a[..., None], 3, axis=2)
    return np.ascontiguousarray(a.transpose(2, 0, 1))
