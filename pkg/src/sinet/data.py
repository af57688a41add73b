"""Synthetic portrait-like images and rotation augmentation."""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigError

SHAPES = ("portrait", "ellipse", "rectangle")


@dataclass(frozen=True)
class ToyDatasetConfig:
    count: int = 8
    image_size: int = 64
    shape: str = "portrait"
    seed: int = 0

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ConfigError(f"shape must be one of {SHAPES}")
        if self.count < 0 or self.image_size < 8:
            raise ConfigError("count must be >= 0 and image_size >= 8")


@dataclass
class Dataset:
    images: np.ndarray  # (n, 3, h, w) float32 in [0, 1]
    masks: np.ndarray  # (n, h, w) uint8 in {0, 1}

    def __len__(self):
        return len(self.images)

    def subset(self, idx):
        return Dataset(self.images[idx], self.masks[idx])


def _texture(rng, size):
    """Oriented stripes plus smooth blotches, one colour per channel."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    freq = rng.uniform(0.25, 0.6)
    theta = rng.normal(0.0, 0.15)  # mostly horizontal stripes
    stripes = 0.5 + 0.5 * np.sin(freq * (yy * np.cos(theta) + xx * np.sin(theta)) + rng.uniform(0, 6.3))
    blotch = ndimage.gaussian_filter(rng.standard_normal((size, size)), size / 8)
    blotch /= np.abs(blotch).max() + 1e-9
    base = rng.uniform(0.0, 1.0, 3)
    amp = rng.uniform(0.15, 0.35)
    img = base[:, None, None] + amp * (stripes - 0.5)[None] + 0.15 * blotch[None]
    return img


def _shape_mask(rng, size, shape):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    s = size
    if shape == "ellipse":
        cy, cx = rng.uniform(0.35, 0.65, 2) * s
        ry, rx = rng.uniform(0.15, 0.3, 2) * s
        return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1
    if shape == "rectangle":
        h, w = rng.uniform(0.3, 0.6, 2) * s
        y0, x0 = rng.uniform(0.1, 0.9 - h / s) * s, rng.uniform(0.1, 0.9 - w / s) * s
        return (yy >= y0) & (yy < y0 + h) & (xx >= x0) & (xx < x0 + w)
    # head ellipse above a shoulder block reaching the bottom edge
    cx = rng.uniform(0.4, 0.6) * s
    cy = rng.uniform(0.32, 0.42) * s
    ry, rx = rng.uniform(0.14, 0.2) * s, rng.uniform(0.11, 0.16) * s
    head = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1
    top = cy + ry * rng.uniform(0.7, 0.95)
    half = rng.uniform(0.25, 0.38) * s
    shoulders = (yy >= top) & (np.abs(xx - cx) <= half * np.clip((yy - top) / (0.12 * s), 0.55, 1.0))
    return head | shoulders


def make_toy_dataset(cfg=ToyDatasetConfig()):
    """Deterministic images/masks for a given config."""
    rng = np.random.default_rng(cfg.seed)
    n, s = cfg.count, cfg.image_size
    images = np.zeros((n, 3, s, s), dtype=np.float32)
    masks = np.zeros((n, s, s), dtype=np.uint8)
    for i in range(n):
        bg = _texture(rng, s)
        fg = _texture(rng, s)
        # push the foreground colour away from the background colour
        shift = rng.choice([-1.0, 1.0], 3) * rng.uniform(0.25, 0.45, 3)
        fg = fg - fg.mean(axis=(1, 2), keepdims=True) + bg.mean(axis=(1, 2), keepdims=True) + shift[:, None, None]
        m = _shape_mask(rng, s, cfg.shape)
        img = np.where(m[None], fg, bg) + 0.03 * rng.standard_normal((3, s, s))
        images[i] = np.clip(img, 0.0, 1.0)
        masks[i] = m
    return Dataset(images, masks)


# ---------------------------------------------------------------------------
# rotation
# ---------------------------------------------------------------------------

def _rotation_coords(h, w, degrees):
    """Source (row, col) for each output pixel; positive angles turn the content
    counter-clockwise as displayed."""
    t = np.deg2rad(degrees)
    c, s = np.cos(t), np.sin(t)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    src_x = dx * c - dy * s + cx
    src_y = dx * s + dy * c + cy
    # snap float noise so quarter turns land exactly on pixel centres
    return np.round(src_y, 9), np.round(src_x, 9)


def rotate_array(arr, degrees, order):
    """Rotate a (h, w) or (c, h, w) array about its centre, zero fill."""
    arr = np.asarray(arr)
    if degrees == 0:
        return arr.copy()
    h, w = arr.shape[-2:]
    sy, sx = _rotation_coords(h, w, degrees)
    planes = arr.reshape(-1, h, w)
    out = np.stack([
        ndimage.map_coordinates(p.astype(np.float64), [sy, sx], order=order, mode="constant", cval=0.0)
        for p in planes
    ])
    return out.reshape(arr.shape).astype(arr.dtype)


def rotate_augment(image, mask, degrees):
    """Bilinear rotation of the image, nearest-neighbour rotation of the mask."""
    return rotate_array(image, degrees, order=1), rotate_array(mask, degrees, order=0)


def rotate_dataset(ds, max_degrees, seed):
    """Rotate each sample by its own uniform angle in ``[-max_degrees, max_degrees]``."""
    if max_degrees == 0:
        return Dataset(ds.images.copy(), ds.masks.copy())
    rng = np.random.default_rng(seed)
    angles = rng.uniform(-max_degrees, max_degrees, len(ds))
    pairs = [rotate_augment(im, m, a) for im, m, a in zip(ds.images, ds.masks, angles)]
    return Dataset(np.stack([p[0] for p in pairs]), np.stack([p[1] for p in pairs]))
