"""Mask overlays and the detection timeline bar."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import font5x7
from .core import FrameDetections, round_half_away
from .errors import BadGeometry, DimensionMismatch, IndexOutOfRange, OutOfRange
from .ingest import Frame

YELLOW = (255, 255, 0)
DARK_RED = (139, 0, 0)
BACKGROUND = (40, 40, 40)
MARKER_GREEN = (0, 200, 0)

DEFAULT_PALETTE = (
    (255, 255, 0),    # yellow
    (0, 255, 255),    # cyan
    (255, 0, 255),    # magenta
    (0, 255, 127),    # spring green
    (255, 165, 0),    # orange
    (135, 206, 250),  # light blue
)

__all__ = [
    "Color",
    "OverlayStyle",
    "TimelineSummary",
    "summarize_detections",
    "confidence_to_color",
    "render_timeline",
    "composite_overlay",
    "attach_timeline",
    "default_bar_height",
]


@dataclass(frozen=True)
class Color:
    r: int
    g: int
    b: int

    def __post_init__(self):
        for ch in (self.r, self.g, self.b):
            if not 0 <= ch <= 255:
                raise OutOfRange(f"color channel {ch} outside [0, 255]")

    def as_tuple(self) -> tuple:
        return (self.r, self.g, self.b)


@dataclass(frozen=True)
class OverlayStyle:
    alpha: float = 0.45
    palette: tuple = DEFAULT_PALETTE
    draw_boxes: bool = True
    draw_labels: bool = True
    box_thickness: int = 2

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise OutOfRange(f"alpha {self.alpha} outside [0, 1]")
        if not self.palette:
            raise OutOfRange("palette must not be empty")
        palette = tuple(c.as_tuple() if isinstance(c, Color) else Color(*c).as_tuple() for c in self.palette)
        object.__setattr__(self, "palette", palette)


@dataclass(frozen=True)
class TimelineSummary:
    frame_count: int
    per_frame_confidence: tuple = field(default_factory=tuple)

    def __post_init__(self):
        values = tuple(None if v is None else float(v) for v in self.per_frame_confidence)
        if self.frame_count < 1:
            raise OutOfRange("timeline needs at least one frame")
        if len(values) != self.frame_count:
            raise DimensionMismatch(f"{len(values)} confidences for {self.frame_count} frames")
        for v in values:
            if v is not None and not 0.0 <= v <= 1.0:
                raise OutOfRange(f"confidence {v} outside [0, 1]")
        object.__setattr__(self, "per_frame_confidence", values)


def summarize_detections(all_frames: Sequence[FrameDetections], frame_count: int) -> TimelineSummary:
    """Mean detection score per frame; ``None`` for frames without detections."""
    values: list = [None] * frame_count
    for fd in all_frames:
        if not 0 <= fd.frame_index < frame_count:
            raise IndexOutOfRange(f"frame {fd.frame_index} outside 0..{frame_count - 1}")
        if fd.detections:
            scores = fd.scores
            values[fd.frame_index] = math.fsum(scores) / len(scores)
    return TimelineSummary(frame_count, tuple(values))


def confidence_to_color(c: float, threshold: float = 0.50) -> tuple:
    """Linear yellow-to-dark-red ramp from ``threshold`` to 1.0."""
    if not threshold <= c <= 1.0:
        raise OutOfRange(f"confidence {c} outside [{threshold}, 1]")
    t = 1.0 if threshold >= 1.0 else (c - threshold) / (1.0 - threshold)
    return tuple(round_half_away(lo + (hi - lo) * t) for lo, hi in zip(YELLOW, DARK_RED))


def _column_members(frame_count: int, width: int) -> list:
    cols = [[] for _ in range(width)]
    for i in range(frame_count):
        cols[i * width // frame_count].append(i)
    # with more columns than frames, a frame also covers the columns up to the next frame
    last: list = []
    for c in range(width):
        if cols[c]:
            last = cols[c]
        else:
            cols[c] = last
    return cols


def render_timeline(summary: TimelineSummary, width: int, height: int, current_frame: int,
                    threshold: float = 0.50) -> np.ndarray:
    """Return the indication bar as an ``(height, width, 3)`` uint8 strip."""
    n = summary.frame_count
    if width < 1 or height < 4:
        raise BadGeometry(f"timeline strip {width}x{height} too small")
    if not 0 <= current_frame < n:
        raise BadGeometry(f"current frame {current_frame} outside 0..{n - 1}")
    colors = np.empty((width, 3), dtype=np.uint8)
    for c, members in enumerate(_column_members(n, width)):
        present = [summary.per_frame_confidence[i] for i in members if summary.per_frame_confidence[i] is not None]
        if present:
            colors[c] = confidence_to_color(math.fsum(present) / len(present), threshold)
        else:
            colors[c] = BACKGROUND
    marker = current_frame * width // n
    marker_w = 3 if width >= 3 * n else 1
    colors[marker:min(width, marker + marker_w)] = MARKER_GREEN
    return np.broadcast_to(colors[None, :, :], (height, width, 3)).copy()


def _blend(region: np.ndarray, color, alpha: float) -> np.ndarray:
    mixed = (1.0 - alpha) * region.astype(np.float64) + alpha * np.asarray(color, dtype=np.float64)
    return np.floor(mixed + 0.5).astype(np.uint8)


def _draw_box(px: np.ndarray, bbox, color, thickness: int) -> None:
    x0, y0, x1, y1 = bbox.x, bbox.y, bbox.x + bbox.w, bbox.y + bbox.h
    t = thickness
    px[y0:min(y0 + t, y1), x0:x1] = color
    px[max(y1 - t, y0):y1, x0:x1] = color
    px[y0:y1, x0:min(x0 + t, x1)] = color
    px[y0:y1, max(x1 - t, x0):x1] = color


def _draw_text(px: np.ndarray, text: str, x: int, y: int, color, scale: int) -> None:
    bitmap = font5x7.text_bitmap(text, scale)
    h, w = bitmap.shape
    H, W = px.shape[:2]
    x0, y0 = max(x, 0), max(y, 0)
    x1, y1 = min(x + w, W), min(y + h, H)
    if x1 <= x0 or y1 <= y0:
        return
    sub = bitmap[y0 - y:y1 - y, x0 - x:x1 - x]
    px[y0:y1, x0:x1][sub] = color


def label_text(label: str, score: float) -> str:
    return f"{label} {score:.2f}"


def composite_overlay(frame: Frame, dets: FrameDetections, style: OverlayStyle = OverlayStyle()) -> Frame:
    """Blend each detection's mask in its palette color, then outline and label it."""
    if not dets.detections:
        return frame
    px = np.array(frame.pixels, copy=True)
    scale = max(1, frame.height // 240)
    for k, det in enumerate(dets.detections):
        mask = det.binary_mask
        if (mask.width, mask.height) != (frame.width, frame.height):
            raise DimensionMismatch(
                f"detection {k} mask is {mask.width}x{mask.height}, frame is {frame.width}x{frame.height}"
            )
        color = style.palette[k % len(style.palette)]
        if style.alpha > 0:
            px[mask.bits] = _blend(px[mask.bits], color, style.alpha)
        if style.draw_boxes:
            _draw_box(px, det.bbox, color, style.box_thickness)
        if style.draw_labels:
            text_h = font5x7.GLYPH_H * scale
            y = det.bbox.y - text_h - 2
            if y < 0:
                y = det.bbox.y + style.box_thickness + 1
            _draw_text(px, label_text(det.label, det.score), det.bbox.x, y, color, scale)
    return Frame(frame.index, px)


def attach_timeline(frame: Frame, strip: np.ndarray) -> Frame:
    strip = np.asarray(strip, dtype=np.uint8)
    if strip.ndim != 3 or strip.shape[2] != 3 or strip.shape[1] != frame.width:
        raise DimensionMismatch(f"strip shape {strip.shape} does not fit frame width {frame.width}")
    return Frame(frame.index, np.concatenate([frame.pixels, strip], axis=0))


def default_bar_height(frame_height: int) -> int:
    return max(8, frame_height // 60)
