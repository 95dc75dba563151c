"""Joint image and mask augmentation.

Geometric transforms apply one inverse map to the image (bilinear) and to
every mask (nearest neighbor), so masks stay binary. Photometric transforms
touch the image only.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import BBox, BinaryMask
from .errors import DegenerateQuad, DimensionMismatch, OutOfBounds, OutOfRange

__all__ = [
    "AnnotatedImage",
    "rotate_pair",
    "crop_pair",
    "blur_image",
    "desaturate_image",
    "perspective_pair",
    "gaussian_kernel",
    "solve_homography",
    "apply_ops",
    "write_manifest",
]


@dataclass(frozen=True, eq=False)
class AnnotatedImage:
    image: np.ndarray
    masks: tuple = ()
    labels: tuple = ()

    def __post_init__(self):
        img = np.asarray(self.image)
        if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
            raise DimensionMismatch(f"image must be HxWx3 uint8, got {img.shape} {img.dtype}")
        masks = tuple(m if isinstance(m, BinaryMask) else BinaryMask(m) for m in self.masks)
        labels = tuple(self.labels)
        if len(labels) != len(masks):
            raise DimensionMismatch(f"{len(masks)} masks but {len(labels)} labels")
        for m in masks:
            if m.bits.shape != img.shape[:2]:
                raise DimensionMismatch(f"mask {m.width}x{m.height} does not match image {img.shape[1]}x{img.shape[0]}")
        object.__setattr__(self, "image", img)
        object.__setattr__(self, "masks", masks)
        object.__setattr__(self, "labels", labels)

    @property
    def width(self) -> int:
        return int(self.image.shape[1])

    @property
    def height(self) -> int:
        return int(self.image.shape[0])

    def __eq__(self, other):
        if not isinstance(other, AnnotatedImage):
            return NotImplemented
        return (np.array_equal(self.image, other.image) and self.masks == other.masks
                and self.labels == other.labels)

    __hash__ = None


def _round_u8(values: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(values + 0.5), 0, 255).astype(np.uint8)


def _sample_bilinear(image: np.ndarray, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    """Sample ``image`` at continuous coordinates (pixel centers at k + 0.5).

    Points outside the image footprint are black.
    """
    h, w = image.shape[:2]
    inside = (sx >= 0) & (sx <= w) & (sy >= 0) & (sy <= h)
    fx = np.clip(sx - 0.5, 0, w - 1)
    fy = np.clip(sy - 0.5, 0, h - 1)
    x0 = np.floor(fx).astype(np.int64)
    y0 = np.floor(fy).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    ax = (fx - x0)[..., None]
    ay = (fy - y0)[..., None]
    img = image.astype(np.float64)
    top = img[y0, x0] * (1 - ax) + img[y0, x1] * ax
    bottom = img[y1, x0] * (1 - ax) + img[y1, x1] * ax
    out = top * (1 - ay) + bottom * ay
    out[~inside] = 0
    return _round_u8(out)


def _sample_nearest(bits: np.ndarray, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    h, w = bits.shape
    ix = np.floor(sx).astype(np.int64)
    iy = np.floor(sy).astype(np.int64)
    inside = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
    out = np.zeros(sx.shape, dtype=bool)
    out[inside] = bits[iy[inside], ix[inside]]
    return out


def _remap(a: AnnotatedImage, out_w: int, out_h: int, inverse) -> AnnotatedImage:
    """Resample through ``inverse(x, y) -> (sx, sy)`` on output pixel centers."""
    xs, ys = np.meshgrid(np.arange(out_w) + 0.5, np.arange(out_h) + 0.5)
    sx, sy = inverse(xs, ys)
    image = _sample_bilinear(a.image, sx, sy)
    masks = tuple(BinaryMask(_sample_nearest(m.bits, sx, sy)) for m in a.masks)
    return AnnotatedImage(image, masks, a.labels)


def rotate_pair(a: AnnotatedImage, angle: float) -> AnnotatedImage:
    """Rotate counter-clockwise (as displayed) by ``angle`` degrees about the
    image center; the canvas grows to hold the rotated bounds.
    """
    quarter = angle / 90.0
    if quarter == math.floor(quarter):
        k = int(quarter) % 4
        if k == 0:
            return a
        return AnnotatedImage(
            np.ascontiguousarray(np.rot90(a.image, k)),
            tuple(BinaryMask(np.rot90(m.bits, k)) for m in a.masks),
            a.labels,
        )
    return _rotate_general(a, angle)


def _rotate_general(a: AnnotatedImage, angle: float) -> AnnotatedImage:
    theta = math.radians(angle)
    c, s = math.cos(theta), math.sin(theta)
    w, h = a.width, a.height
    out_w = max(1, int(math.ceil(abs(w * c) + abs(h * s) - 1e-9)))
    out_h = max(1, int(math.ceil(abs(w * s) + abs(h * c) - 1e-9)))
    cx, cy = w / 2.0, h / 2.0
    ocx, ocy = out_w / 2.0, out_h / 2.0

    def inverse(x, y):
        # forward: x' = c*dx + s*dy, y' = -s*dx + c*dy (y axis points down)
        dx, dy = x - ocx, y - ocy
        return cx + c * dx - s * dy, cy + s * dx + c * dy

    return _remap(a, out_w, out_h, inverse)


def crop_pair(a: AnnotatedImage, region: BBox) -> AnnotatedImage:
    if not region.contains_box(a.width, a.height):
        raise OutOfBounds(f"crop {region} exceeds {a.width}x{a.height}")
    ys = slice(region.y, region.y + region.h)
    xs = slice(region.x, region.x + region.w)
    masks, labels = [], []
    for m, label in zip(a.masks, a.labels):
        bits = m.bits[ys, xs]
        if bits.any():
            masks.append(BinaryMask(bits))
            labels.append(label)
    return AnnotatedImage(np.ascontiguousarray(a.image[ys, xs]), tuple(masks), tuple(labels))


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(math.ceil(3 * sigma))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(offsets ** 2) / (2 * sigma * sigma))
    return k / k.sum()


def _convolve_axis(values: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    radius = len(kernel) // 2
    pad = [(0, 0)] * values.ndim
    pad[axis] = (radius, radius)
    padded = np.pad(values, pad, mode="edge")
    n = values.shape[axis]
    out = np.zeros_like(values, dtype=np.float64)
    for k, weight in enumerate(kernel):
        out += weight * np.take(padded, np.arange(k, k + n), axis=axis)
    return out


def blur_image(a: AnnotatedImage, sigma: float) -> AnnotatedImage:
    """Separable Gaussian blur, radius ``ceil(3 * sigma)``, edge-clamped."""
    if not sigma > 0:
        raise OutOfRange(f"sigma must be positive, got {sigma}")
    kernel = gaussian_kernel(sigma)
    img = a.image.astype(np.float64)
    img = _convolve_axis(_convolve_axis(img, kernel, 1), kernel, 0)
    return AnnotatedImage(_round_u8(img), a.masks, a.labels)


def desaturate_image(a: AnnotatedImage, amount: float) -> AnnotatedImage:
    if not 0.0 <= amount <= 1.0:
        raise OutOfRange(f"desaturation amount {amount} outside [0, 1]")
    img = a.image.astype(np.float64)
    gray = np.floor(img @ np.array([0.299, 0.587, 0.114]) + 0.5)
    out = (1.0 - amount) * img + amount * gray[..., None]
    return AnnotatedImage(_round_u8(out), a.masks, a.labels)


def _cross(o, p, q) -> float:
    return (p[0] - o[0]) * (q[1] - o[1]) - (p[1] - o[1]) * (q[0] - o[0])


def _check_convex(quad) -> None:
    turns = [_cross(quad[i], quad[(i + 1) % 4], quad[(i + 2) % 4]) for i in range(4)]
    if any(t == 0 for t in turns):
        raise DegenerateQuad("quad has collinear corners")
    if not (all(t > 0 for t in turns) or all(t < 0 for t in turns)):
        raise DegenerateQuad("quad is not convex or self-intersects")


def solve_homography(src: Sequence, dst: Sequence) -> np.ndarray:
    """3x3 homography (h33 = 1) mapping four ``src`` points onto ``dst``."""
    A = np.zeros((8, 8))
    b = np.zeros(8)
    for i, ((x, y), (u, v)) in enumerate(zip(src, dst)):
        A[2 * i] = [x, y, 1, 0, 0, 0, -u * x, -u * y]
        A[2 * i + 1] = [0, 0, 0, x, y, 1, -v * x, -v * y]
        b[2 * i], b[2 * i + 1] = u, v
    try:
        h = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise DegenerateQuad("corner correspondence is singular") from exc
    return np.append(h, 1.0).reshape(3, 3)


def perspective_pair(a: AnnotatedImage, quad: Sequence) -> AnnotatedImage:
    """Warp so the image corners (top-left, top-right, bottom-right,
    bottom-left) land on ``quad``; the output canvas is the quad's bounding box.
    """
    quad = [(float(x), float(y)) for x, y in quad]
    if len(quad) != 4:
        raise DegenerateQuad(f"need 4 corners, got {len(quad)}")
    _check_convex(quad)
    w, h = a.width, a.height
    corners = [(0.0, 0.0), (float(w), 0.0), (float(w), float(h)), (0.0, float(h))]
    H = solve_homography(corners, quad)
    Hinv = np.linalg.inv(H)
    xs = [p[0] for p in quad]
    ys = [p[1] for p in quad]
    ox, oy = math.floor(min(xs)), math.floor(min(ys))
    out_w = max(1, int(math.ceil(max(xs))) - ox)
    out_h = max(1, int(math.ceil(max(ys))) - oy)

    def inverse(x, y):
        X, Y = x + ox, y + oy
        denom = Hinv[2, 0] * X + Hinv[2, 1] * Y + Hinv[2, 2]
        return ((Hinv[0, 0] * X + Hinv[0, 1] * Y + Hinv[0, 2]) / denom,
                (Hinv[1, 0] * X + Hinv[1, 1] * Y + Hinv[1, 2]) / denom)

    return _remap(a, out_w, out_h, inverse)


_OPS = {
    "rotate": lambda a, p: rotate_pair(a, p["angle"]),
    "crop": lambda a, p: crop_pair(a, BBox(p["x"], p["y"], p["w"], p["h"])),
    "blur": lambda a, p: blur_image(a, p["sigma"]),
    "desaturate": lambda a, p: desaturate_image(a, p["amount"]),
    "perspective": lambda a, p: perspective_pair(a, p["quad"]),
}


def apply_ops(a: AnnotatedImage, ops: Sequence[dict]) -> AnnotatedImage:
    """Apply ``[{"op": "rotate", "angle": 90}, ...]`` in order."""
    for spec in ops:
        params = dict(spec)
        name = params.pop("op")
        if name not in _OPS:
            raise ValueError(f"unknown augmentation op {name!r}")
        a = _OPS[name](a, params)
    return a


def write_manifest(path, entries: Sequence[dict]) -> None:
    """Record which ops produced each sample.

    Each entry is ``{"source": str, "output": str, "ops": [...]}``.
    """
    doc = {"schema_version": 1, "samples": [
        {"source": str(e["source"]), "output": str(e["output"]), "ops": list(e["ops"])} for e in entries
    ]}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def read_manifest(path) -> list:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("schema_version") != 1:
        raise ValueError("unsupported manifest schema version")
    return doc["samples"]
