"""Per-frame instance segmentation backends.

A backend receives a frame already resized to the model input range and
returns :class:`RawDetection` objects in that resized space.
:func:`segment_frame` handles the resizing, maps results back to the
original resolution and applies the confidence threshold.

Three backends ship with the package:

* :class:`MockBackend` draws seeded pseudo-random ellipses (tests, demos).
* :class:`ReplayBackend` returns detections stored in a metadata file. It
  works in original frame coordinates and bypasses :func:`segment_frame`.
* :class:`ExternalBackend` talks to a user-supplied model runner process.
"""
from __future__ import annotations

import json
import math
import subprocess
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Protocol, Sequence

import numpy as np
from PIL import Image

from .core import BinaryMask, Detection, FrameDetections, RleMask, rle_decode
from .errors import BackendFailure, DimensionMismatch, OutOfRange, RleError, SchemaVersionUnsupported
from .ingest import Frame

MASK64 = 0xFFFFFFFFFFFFFFFF

__all__ = [
    "SegmenterConfig",
    "RawDetection",
    "SegmenterBackend",
    "compute_resize",
    "filter_detections",
    "segment_frame",
    "splitmix64",
    "mock_segment",
    "MockBackend",
    "replay_segment",
    "ReplayBackend",
    "ExternalBackend",
]


@dataclass(frozen=True)
class SegmenterConfig:
    confidence_threshold: float = 0.50
    short_side_target: int = 800
    long_side_cap: int = 1333

    def __post_init__(self):
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise OutOfRange(f"confidence threshold {self.confidence_threshold} outside [0, 1]")
        if not 0 < self.short_side_target <= self.long_side_cap:
            raise OutOfRange("require 0 < short_side_target <= long_side_cap")


@dataclass(frozen=True, eq=False)
class RawDetection:
    """Backend output: boolean mask of shape ``(height, width)`` in the
    backend's input space, plus score and label. A box, if the backend has
    one, is informational only; the tight box of the mask is authoritative.
    """

    mask: np.ndarray
    score: float
    label: str = "lesion"
    box: Optional[tuple] = None


class SegmenterBackend(Protocol):
    #: whether ``predict`` may be called from several threads at once
    concurrent_safe: bool

    def predict(self, frame: Frame) -> list:
        ...


def compute_resize(width: int, height: int, cfg: SegmenterConfig = SegmenterConfig()):
    """Return ``(new_width, new_height, scale)`` fitting the short-side
    target without exceeding the long-side cap.
    """
    if width < 1 or height < 1:
        raise OutOfRange(f"invalid size {width}x{height}")
    scale = min(Fraction(cfg.short_side_target, min(width, height)),
                Fraction(cfg.long_side_cap, max(width, height)))
    # exact rational arithmetic so ties resolve identically everywhere
    new_w = max(1, _round_fraction(width * scale))
    new_h = max(1, _round_fraction(height * scale))
    return new_w, new_h, float(scale)


def _round_fraction(value: Fraction) -> int:
    return int(math.floor(value + Fraction(1, 2)))


def filter_detections(dets: FrameDetections, threshold: float) -> FrameDetections:
    return FrameDetections(dets.frame_index, tuple(d for d in dets.detections if d.score >= threshold))


def _nn_indices(dst: int, src: int) -> np.ndarray:
    # index into a src-length axis for each of dst output samples, by pixel centers
    return np.minimum(((2 * np.arange(dst) + 1) * src) // (2 * dst), src - 1)


def resize_mask_nearest(mask: np.ndarray, width: int, height: int) -> np.ndarray:
    rows = _nn_indices(height, mask.shape[0])
    cols = _nn_indices(width, mask.shape[1])
    return mask[np.ix_(rows, cols)]


def segment_frame(backend: SegmenterBackend, frame: Frame, cfg: SegmenterConfig = SegmenterConfig()) -> FrameDetections:
    new_w, new_h, _ = compute_resize(frame.width, frame.height, cfg)
    if (new_w, new_h) == (frame.width, frame.height):
        model_input = frame
    else:
        resized = Image.fromarray(np.ascontiguousarray(frame.pixels), "RGB").resize((new_w, new_h), Image.BILINEAR)
        model_input = Frame(frame.index, np.asarray(resized))
    try:
        raw = list(backend.predict(model_input))
    except BackendFailure:
        raise
    except Exception as exc:
        raise BackendFailure(f"backend failed on frame {frame.index}: {exc}") from exc

    out = []
    for k, det in enumerate(raw):
        try:
            score = float(det.score)
        except (TypeError, ValueError) as exc:
            raise BackendFailure(f"detection {k} of frame {frame.index} has no numeric score") from exc
        if not 0.0 <= score <= 1.0:
            raise BackendFailure(f"detection {k} of frame {frame.index} has score {det.score!r} outside [0, 1]")
        if score < cfg.confidence_threshold:
            continue
        mask = np.asarray(det.mask, dtype=bool)
        if mask.shape != (new_h, new_w):
            raise BackendFailure(
                f"detection {k} of frame {frame.index}: mask shape {mask.shape}, expected {(new_h, new_w)}"
            )
        full = resize_mask_nearest(mask, frame.width, frame.height)
        if not full.any():
            # region vanished when mapped back to the original resolution
            continue
        out.append(Detection.from_mask(BinaryMask(full), score, str(det.label)))
    return FrameDetections(frame.index, tuple(out))


class _SplitMix64:
    def __init__(self, state: int):
        self.state = state & MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        return splitmix64_finalize(self.state)

    def unit(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next() >> 11) * (1.0 / (1 << 53))

    def below(self, n: int) -> int:
        return self.next() % n


def splitmix64_finalize(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def splitmix64(state: int) -> tuple:
    """One splitmix64 step: returns ``(next_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    return state, splitmix64_finalize(state)


def _ellipse_mask(width: int, height: int, cx: int, cy: int, a: int, b: int) -> np.ndarray:
    # ellipse centered on the center of pixel (cx, cy); integer test of pixel centers
    dx = np.arange(width, dtype=np.int64) - cx
    dy = np.arange(height, dtype=np.int64) - cy
    return (dx[None, :] ** 2) * (b * b) + (dy[:, None] ** 2) * (a * a) <= (a * a) * (b * b)


def _axis_params(rng: _SplitMix64, size: int):
    # semi-axis in [2, max(2, size // 4)], center keeping the ellipse inside the axis
    semi = 2 + rng.below(max(2, size // 4) - 1)
    semi = max(1, min(semi, (size - 1) // 2))
    lo, hi = semi, size - 1 - semi
    center = lo + rng.below(hi - lo + 1) if hi >= lo else size // 2
    return center, semi


def mock_segment(seed: int, frame: Frame) -> list:
    """Deterministic pseudo-detections for ``frame``.

    Uses only integer arithmetic and exact double products, so the output is
    identical on every platform for equal ``(seed, frame.index, size)``.
    """
    rng = _SplitMix64((seed ^ frame.index) & MASK64)
    count = rng.below(4)
    out = []
    for _ in range(count):
        cx, a = _axis_params(rng, frame.width)
        cy, b = _axis_params(rng, frame.height)
        score = 0.30 + 0.69 * rng.unit()
        mask = _ellipse_mask(frame.width, frame.height, cx, cy, a, b)
        out.append(RawDetection(mask, score, "lesion"))
    return out


class MockBackend:
    concurrent_safe = True

    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64

    def predict(self, frame: Frame) -> list:
        return mock_segment(self.seed, frame)

    @property
    def spec(self) -> str:
        return f"mock:{self.seed}"


def replay_segment(metadata, frame_index: int) -> FrameDetections:
    """Stored detections for ``frame_index``; empty when none were recorded."""
    if metadata.schema_version != 1:
        raise SchemaVersionUnsupported(f"schema version {metadata.schema_version}")
    for fd in metadata.frames:
        if fd.frame_index == frame_index:
            return fd
    return FrameDetections(frame_index, ())


class ReplayBackend:
    """Replays a run's metadata. Detections are in original coordinates."""

    concurrent_safe = True

    def __init__(self, metadata, source: str = ""):
        if metadata.schema_version != 1:
            raise SchemaVersionUnsupported(f"schema version {metadata.schema_version}")
        self.metadata = metadata
        self.source = source
        self._by_index = {fd.frame_index: fd for fd in metadata.frames}

    @property
    def threshold(self) -> float:
        return self.metadata.config["confidence_threshold"]

    def check_dimensions(self, width: int, height: int) -> None:
        video = self.metadata.video
        if (video["width"], video["height"]) != (width, height):
            raise DimensionMismatch(
                f"metadata recorded {video['width']}x{video['height']}, video is {width}x{height}"
            )

    def detect(self, frame: Frame) -> FrameDetections:
        self.check_dimensions(frame.width, frame.height)
        return self._by_index.get(frame.index, FrameDetections(frame.index, ()))


class ExternalBackend:
    """Model runner subprocess speaking a line-delimited protocol.

    For each frame the runner receives one JSON header line
    ``{"frame_index": i, "width": w, "height": h}`` followed by ``w*h*3``
    raw RGB24 bytes on stdin, and must answer with one JSON line
    ``{"detections": [{"score": s, "label": "...", "mask_rle": {"size": [h, w], "counts": [...]}}]}``
    using the same column-major run-length encoding as the metadata files.
    """

    concurrent_safe = False

    def __init__(self, model_path: str, command: Sequence[str] = ("{model}",)):
        self.model_path = str(model_path)
        self.command = [part.format(model=self.model_path) for part in command]
        self.proc = None

    def _start(self):
        try:
            self.proc = subprocess.Popen(self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE)
        except OSError as exc:
            raise BackendFailure(f"cannot start model runner {self.command[0]!r}: {exc}") from exc

    def predict(self, frame: Frame) -> list:
        if self.proc is None:
            self._start()
        header = json.dumps({"frame_index": frame.index, "width": frame.width, "height": frame.height})
        try:
            self.proc.stdin.write(header.encode() + b"\n")
            self.proc.stdin.write(np.ascontiguousarray(frame.pixels).tobytes())
            self.proc.stdin.flush()
            line = self.proc.stdout.readline()
        except (BrokenPipeError, OSError) as exc:
            raise BackendFailure(f"model runner pipe failed: {exc}") from exc
        if not line:
            raise BackendFailure(f"model runner exited (code {self.proc.poll()}) at frame {frame.index}")
        try:
            reply = json.loads(line)
            out = []
            for det in reply["detections"]:
                h, w = det["mask_rle"]["size"]
                mask = rle_decode(RleMask(int(w), int(h), det["mask_rle"]["counts"])).bits
                out.append(RawDetection(mask, float(det["score"]), str(det.get("label", "lesion"))))
        except (ValueError, KeyError, TypeError, RleError) as exc:
            raise BackendFailure(f"malformed runner reply at frame {frame.index}: {exc}") from exc
        return out

    def close(self) -> None:
        if self.proc is not None:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
            self.proc.wait()
            self.proc.stdout.close()
            self.proc = None
