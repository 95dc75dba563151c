"""Domain types and mask codecs.

Coordinates follow the image convention: ``x`` grows to the right, ``y``
grows downwards and the origin is the top-left corner. Masks are stored as
boolean arrays of shape ``(height, width)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DegeneratePolygon,
    DimensionMismatch,
    EmptyMask,
    InteriorZero,
    OutOfRange,
    SumMismatch,
)

__all__ = [
    "BinaryMask",
    "RleMask",
    "BBox",
    "Detection",
    "FrameDetections",
    "Polygon",
    "rle_encode",
    "rle_decode",
    "polygon_rasterize",
    "tight_bbox",
    "round_half_away",
]


def round_half_away(value: float) -> int:
    """Round to the nearest integer, ties away from zero."""
    if value >= 0:
        return int(math.floor(value + 0.5))
    return -int(math.floor(-value + 0.5))


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Boolean pixel grid of shape ``(height, width)``."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.array(self.bits, dtype=bool, copy=True)
        if bits.ndim != 2 or bits.shape[0] < 1 or bits.shape[1] < 1:
            raise DimensionMismatch(f"mask must be a non-empty 2-D grid, got shape {bits.shape}")
        object.__setattr__(self, "bits", _frozen(bits))

    @classmethod
    def empty(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))

    @classmethod
    def full(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.ones((height, width), dtype=bool))

    @property
    def width(self) -> int:
        return int(self.bits.shape[1])

    @property
    def height(self) -> int:
        return int(self.bits.shape[0])

    @property
    def area(self) -> int:
        return int(np.count_nonzero(self.bits))

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.bits.shape == other.bits.shape and bool(np.array_equal(self.bits, other.bits))

    __hash__ = None

    def __or__(self, other: "BinaryMask") -> "BinaryMask":
        if self.bits.shape != other.bits.shape:
            raise DimensionMismatch("cannot combine masks of different dimensions")
        return BinaryMask(self.bits | other.bits)


@dataclass(frozen=True)
class RleMask:
    """Column-major run lengths, background run first.

    A leading zero run is only present when the scan starts on foreground.
    """

    width: int
    height: int
    runs: tuple

    def __post_init__(self):
        object.__setattr__(self, "runs", tuple(int(r) for r in self.runs))
        if self.width < 1 or self.height < 1:
            raise DimensionMismatch(f"invalid mask size {self.width}x{self.height}")

    def validate(self) -> None:
        if any(r < 0 for r in self.runs):
            raise InteriorZero(f"negative run length in {self.runs[:8]}...")
        for k, r in enumerate(self.runs):
            if k > 0 and r == 0:
                raise InteriorZero(f"zero run at position {k}")
        total = sum(self.runs)
        if total != self.width * self.height:
            raise SumMismatch(
                f"runs sum to {total}, expected {self.width}x{self.height}={self.width * self.height}"
            )

    @cached_property
    def decoded(self) -> BinaryMask:
        return rle_decode(self)


@dataclass(frozen=True)
class BBox:
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise OutOfRange(f"bbox must have positive size, got {self.w}x{self.h}")

    def as_list(self) -> list:
        return [self.x, self.y, self.w, self.h]

    def contains_box(self, width: int, height: int) -> bool:
        return self.x >= 0 and self.y >= 0 and self.x + self.w <= width and self.y + self.h <= height


@dataclass(frozen=True)
class Detection:
    """One detected region of a frame.

    ``bbox`` must be the tight bounding box of the decoded mask; use
    :meth:`from_mask` to derive it.
    """

    bbox: BBox
    mask: RleMask
    score: float
    label: str
    id: Optional[int] = None

    def __post_init__(self):
        score = float(self.score)
        if not (0.0 <= score <= 1.0):
            raise OutOfRange(f"score {self.score!r} outside [0, 1]")
        object.__setattr__(self, "score", score)
        expected = tight_bbox(self.mask.decoded)
        if expected != self.bbox:
            raise DimensionMismatch(f"bbox {self.bbox} is not the tight box {expected} of the mask")

    @classmethod
    def from_mask(cls, mask: BinaryMask, score: float, label: str = "lesion",
                  id: Optional[int] = None) -> "Detection":
        return cls(tight_bbox(mask), rle_encode(mask), score, label, id)

    @property
    def binary_mask(self) -> BinaryMask:
        return self.mask.decoded


@dataclass(frozen=True)
class FrameDetections:
    frame_index: int
    detections: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.frame_index < 0:
            raise OutOfRange(f"negative frame index {self.frame_index}")
        object.__setattr__(self, "detections", tuple(self.detections))

    def __len__(self):
        return len(self.detections)

    @property
    def scores(self) -> list:
        return [d.score for d in self.detections]


@dataclass(frozen=True)
class Polygon:
    vertices: tuple

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        if len(verts) < 3:
            raise DegeneratePolygon(f"polygon needs at least 3 vertices, got {len(verts)}")
        object.__setattr__(self, "vertices", verts)

    @classmethod
    def from_flat(cls, coords: Sequence[float]) -> "Polygon":
        if len(coords) % 2:
            raise DegeneratePolygon("flat coordinate list has odd length")
        return cls(tuple(zip(coords[0::2], coords[1::2])))

    def within(self, width: float, height: float) -> bool:
        return all(0 <= x <= width and 0 <= y <= height for x, y in self.vertices)


def rle_encode(mask: BinaryMask) -> RleMask:
    flat = mask.bits.ravel(order="F")
    n = flat.size
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [n]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return RleMask(mask.width, mask.height, tuple(runs))


def rle_decode(rle: RleMask) -> BinaryMask:
    rle.validate()
    values = np.arange(len(rle.runs)) % 2 == 1
    flat = np.repeat(values, rle.runs)
    return BinaryMask(flat.reshape((rle.height, rle.width), order="F"))


def _edge_crossings(vertices, yc: float):
    """x positions where the horizontal line ``y = yc`` crosses polygon edges.

    Edges are half-open in y so shared vertices are counted once.
    """
    xs = []
    n = len(vertices)
    for k in range(n):
        x0, y0 = vertices[k]
        x1, y1 = vertices[(k + 1) % n]
        if (y0 > yc) == (y1 > yc):
            continue
        if y0 > y1:
            x0, y0, x1, y1 = x1, y1, x0, y0
        xs.append(x0 + (yc - y0) * (x1 - x0) / (y1 - y0))
    return xs


def polygon_rasterize(poly: Polygon, width: int, height: int) -> BinaryMask:
    """Pixel-center, even-odd rasterization of a polygon."""
    if len(poly.vertices) < 3:
        raise DegeneratePolygon("polygon needs at least 3 vertices")
    if width < 1 or height < 1:
        raise DimensionMismatch(f"invalid raster size {width}x{height}")
    out = np.zeros((height, width), dtype=bool)
    ys = [v[1] for v in poly.vertices]
    lo = max(0, int(math.floor(min(ys) - 0.5)))
    hi = min(height, int(math.ceil(max(ys) + 0.5)))
    centers = np.arange(width) + 0.5
    for row in range(lo, hi):
        xs = _edge_crossings(poly.vertices, row + 0.5)
        if not xs:
            continue
        xs = np.sort(np.asarray(xs))
        # crossings strictly to the right of each center
        right = xs.size - np.searchsorted(xs, centers, side="right")
        out[row] = (right % 2) == 1
    return BinaryMask(out)


def tight_bbox(mask: BinaryMask) -> BBox:
    rows = np.flatnonzero(mask.bits.any(axis=1))
    if rows.size == 0:
        raise EmptyMask("mask has no foreground pixel")
    cols = np.flatnonzero(mask.bits.any(axis=0))
    y0, y1 = int(rows[0]), int(rows[-1])
    x0, x1 = int(cols[0]), int(cols[-1])
    return BBox(x0, y0, x1 - x0 + 1, y1 - y0 + 1)
