"""Portrait crops from face boxes, plus a line-delimited review manifest.

The face detector and the full-body segmenter are external: this module only
does the geometry (face box -> upper-body crop rectangle), the pixel crop and
the accept/reject bookkeeping a human reviewer drives.
"""

import csv
import json
import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, InputError

DECISIONS = ("accept", "reject")


class Rect(NamedTuple):
    x: int
    y: int
    w: int
    h: int

    def contains(self, other):
        return (self.x <= other.x and self.y <= other.y
                and other.x + other.w <= self.x + self.w and other.y + other.h <= self.y + self.h)


@dataclass(frozen=True)
class FaceBox:
    x: float
    y: float
    w: float
    h: float

    def check(self, image_size):
        ih, iw = image_size
        if self.w <= 0 or self.h <= 0:
            raise InputError(f"face box must have positive size, got {self.w}x{self.h}")
        if self.x < 0 or self.y < 0 or self.x + self.w > iw or self.y + self.h > ih:
            raise InputError(f"face box {self} leaves the {iw}x{ih} image")


@dataclass(frozen=True)
class CropSpec:
    scale_w: float = 2.5
    scale_h: float = 2.5
    down_shift: float = 0.3  # fraction of the face height

    def __post_init__(self):
        if self.scale_w < 1 or self.scale_h < 1:
            raise ConfigError("crop scales must be >= 1")


def expand_face_box(box, image_size, spec=CropSpec()):
    """Grow ``box`` about its centre, move it down by ``down_shift * h`` and clamp.

    ``image_size`` is ``(height, width)``.  Edges are rounded outwards to whole
    pixels, so an integer box with unit scale and no shift maps to itself.
    """
    box.check(image_size)
    ih, iw = image_size
    cx = box.x + box.w / 2.0
    cy = box.y + box.h / 2.0 + spec.down_shift * box.h
    hw, hh = box.w * spec.scale_w / 2.0, box.h * spec.scale_h / 2.0
    x0 = max(0, math.floor(cx - hw))
    y0 = max(0, math.floor(cy - hh))
    x1 = min(iw, math.ceil(cx + hw))
    y1 = min(ih, math.ceil(cy + hh))
    if x1 <= x0 or y1 <= y0:
        raise InputError(f"crop of {box} is empty after clamping to {iw}x{ih}")
    return Rect(x0, y0, x1 - x0, y1 - y0)


def crop_pair(image, mask, rect):
    """Pixel-exact crop of an image ``(h, w[, c])`` and its binary mask ``(h, w)``."""
    image, mask = np.asarray(image), np.asarray(mask)
    if image.shape[:2] != mask.shape:
        raise InputError(f"image {image.shape[:2]} and mask {mask.shape} sizes differ")
    ih, iw = mask.shape
    x, y, w, h = rect
    if w <= 0 or h <= 0 or x < 0 or y < 0 or x + w > iw or y + h > ih:
        raise InputError(f"rect {tuple(rect)} is not inside the {iw}x{ih} image")
    return image[y:y + h, x:x + w].copy(), mask[y:y + h, x:x + w].copy()


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

@dataclass
class ManifestEntry:
    id: str
    image: str
    mask: str
    rect: Rect
    decision: str = None  # None means still pending review

    def to_json(self):
        d = asdict(self)
        d["rect"] = list(self.rect)
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, line):
        d = json.loads(line)
        decision = d.get("decision")
        if decision not in (None,) + DECISIONS:
            raise InputError(f"entry {d.get('id')!r}: unknown decision {decision!r}")
        return cls(str(d["id"]), d["image"], d["mask"], Rect(*d["rect"]), decision)


def write_manifest(entries, path):
    with open(path, "w") as fh:
        for e in entries:
            fh.write(e.to_json() + "\n")


def read_manifest(path):
    with open(path) as fh:
        return [ManifestEntry.from_json(line) for line in fh if line.strip()]


class Review(NamedTuple):
    accepted: list
    rejected: list
    pending: list


def review_manifest(entries, decisions):
    """Apply ``id -> accept|reject`` decisions; input order is kept in every list.

    Entries without a decision (here or already recorded) stay pending.
    """
    bad = {k: v for k, v in decisions.items() if v not in DECISIONS}
    if bad:
        raise InputError(f"decisions must be accept/reject, got {bad}")
    out = Review([], [], [])
    for e in entries:
        d = decisions.get(e.id, e.decision)
        e = ManifestEntry(e.id, e.image, e.mask, e.rect, d)
        {"accept": out.accepted, "reject": out.rejected, None: out.pending}[d].append(e)
    return out


def read_boxes(path):
    """Face boxes from ``id,x,y,w,h`` rows; a header row is optional."""
    boxes = {}
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or row[0].startswith("#"):
                continue
            if lineno == 1 and row[0].strip().lower() == "id":
                continue
            if len(row) != 5:
                raise InputError(f"{path}:{lineno}: expected id,x,y,w,h")
            try:
                boxes[row[0].strip()] = FaceBox(*(float(v) for v in row[1:]))
            except ValueError:
                raise InputError(f"{path}:{lineno}: non-numeric box {row[1:]}") from None
    return boxes


def read_decisions(path):
    """``id,decision`` rows into a dict."""
    with open(path, newline="") as fh:
        return {row[0].strip(): row[1].strip() for row in csv.reader(fh)
                if len(row) >= 2 and row[0].strip().lower() != "id"}
