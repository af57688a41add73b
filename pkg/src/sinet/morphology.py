"""Binary dilation/erosion with a square all-ones structuring element.

Pixels outside the image count as background for both operators, so erosion
clears a frame of ``size // 2`` pixels along the border of a full mask.
"""

import numpy as np

from .errors import ConfigError, InputError


def _check(mask, size):
    if size < 1 or size % 2 == 0:
        raise ConfigError(f"structuring element size must be odd and >= 1, got {size}")
    m = np.asarray(mask)
    if m.ndim != 2:
        raise InputError(f"mask must be 2-D, got shape {m.shape}")
    if not np.isin(m, (0, 1)).all():
        raise InputError("mask must be binary (0/1)")
    return m.astype(bool)


def _filter1d(m, size, axis, reduce):
    r = size // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (r, r)
    padded = np.pad(m, pad, constant_values=False)
    windows = np.lib.stride_tricks.sliding_window_view(padded, size, axis=axis)
    return reduce(windows, axis=-1)


def morph_dilate(mask, size=15):
    m = _check(mask, size)
    if size == 1:
        return m.astype(np.uint8)
    out = _filter1d(_filter1d(m, size, 0, np.any), size, 1, np.any)
    return out.astype(np.uint8)


def morph_erode(mask, size=15):
    m = _check(mask, size)
    if size == 1:
        return m.astype(np.uint8)
    out = _filter1d(_filter1d(m, size, 0, np.all), size, 1, np.all)
    return out.astype(np.uint8)


def boundary_band(mask, size=15):
    """Dilation minus erosion: the band around every foreground/background edge."""
    return (morph_dilate(mask, size).astype(bool) & ~morph_erode(mask, size).astype(bool)).astype(np.uint8)
