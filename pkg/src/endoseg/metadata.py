"""Run metadata: the JSON record of one video analysis.

Output is byte-stable: keys are written in a fixed order, one frame per
line, with a trailing newline. Parsing is strict; unknown fields are
rejected at the current schema version.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .core import BBox, Detection, FrameDetections, RleMask
from .errors import ParseError, RleError, SchemaVersionUnsupported, EndosegError
from .render import summarize_detections

SCHEMA_VERSION = 1

VIDEO_KEYS = ("path", "width", "height", "fps", "frame_count")
CONFIG_KEYS = (
    "model", "confidence_threshold", "short_side_target", "long_side_cap",
    "io_mode", "alpha", "draw_boxes", "draw_labels", "bar_height",
)
TIMING_KEYS = ("per_frame_ms_mean", "total_ms")
TOP_KEYS = ("schema_version", "video", "config", "frames", "timeline", "timing")
FRAME_KEYS = ("frame_index", "detections")
DETECTION_KEYS = ("bbox", "score", "label", "mask_rle", "id")
RLE_KEYS = ("size", "counts")

__all__ = ["RunMetadata", "emit_metadata", "parse_metadata", "dumps_metadata", "loads_metadata",
           "validate_metadata", "SCHEMA_VERSION"]


@dataclass(frozen=True)
class RunMetadata:
    video: dict
    config: dict
    frames: tuple
    timeline: tuple
    timing: dict = field(default_factory=lambda: {"per_frame_ms_mean": None, "total_ms": None})
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        object.__setattr__(self, "timeline", tuple(self.timeline))

    @property
    def frame_count(self) -> int:
        return self.video["frame_count"]

    def detections_by_frame(self) -> dict:
        return {fd.frame_index: fd for fd in self.frames}


def _detection_doc(det: Detection) -> dict:
    return {
        "bbox": det.bbox.as_list(),
        "score": det.score,
        "label": det.label,
        "mask_rle": {"size": [det.mask.height, det.mask.width], "counts": list(det.mask.runs)},
        "id": det.id,
    }


def _dump(value) -> str:
    return json.dumps(value, separators=(", ", ": "), allow_nan=False)


def dumps_metadata(meta: RunMetadata) -> str:
    lines = ["{"]
    lines.append(f'  "schema_version": {_dump(meta.schema_version)},')
    lines.append(f'  "video": {_dump({k: meta.video[k] for k in VIDEO_KEYS})},')
    lines.append(f'  "config": {_dump({k: meta.config[k] for k in CONFIG_KEYS})},')
    if meta.frames:
        lines.append('  "frames": [')
        rows = [
            "    " + _dump({"frame_index": fd.frame_index, "detections": [_detection_doc(d) for d in fd.detections]})
            for fd in meta.frames
        ]
        lines.append(",\n".join(rows))
        lines.append("  ],")
    else:
        lines.append('  "frames": [],')
    lines.append(f'  "timeline": {_dump(list(meta.timeline))},')
    lines.append(f'  "timing": {_dump({k: meta.timing[k] for k in TIMING_KEYS})}')
    lines.append("}")
    return "\n".join(lines) + "\n"


def emit_metadata(meta: RunMetadata, path) -> Path:
    path = Path(path)
    path.write_text(dumps_metadata(meta), encoding="utf-8")
    return path


def _keys(obj, expected, where: str) -> None:
    if not isinstance(obj, dict):
        raise ParseError(f"{where}: expected an object")
    extra = [k for k in obj if k not in expected]
    missing = [k for k in expected if k not in obj]
    if extra:
        raise ParseError(f"{where}: unknown field(s) {extra}")
    if missing:
        raise ParseError(f"{where}: missing field(s) {missing}")


def _number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _parse_detection(doc, video: dict, frame_index: int, k: int) -> Detection:
    where = f"frame {frame_index} detection {k}"
    optional = [key for key in DETECTION_KEYS if key != "id"]
    _keys({key: v for key, v in doc.items() if key != "id"} if isinstance(doc, dict) else doc, optional, where)
    rle = doc["mask_rle"]
    _keys(rle, RLE_KEYS, f"{where} mask_rle")
    try:
        h, w = rle["size"]
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{where}: mask_rle.size must be [h, w]") from exc
    if (w, h) != (video["width"], video["height"]):
        raise ParseError(f"{where}: mask size {w}x{h} differs from video {video['width']}x{video['height']}")
    counts = rle["counts"]
    if not isinstance(counts, list) or not all(isinstance(c, int) and not isinstance(c, bool) for c in counts):
        raise ParseError(f"{where}: counts must be a list of integers")
    mask = RleMask(w, h, tuple(counts))
    try:
        mask.validate()
    except RleError as exc:
        raise ParseError(f"{where}: {exc}") from exc
    bbox = doc["bbox"]
    if not (isinstance(bbox, list) and len(bbox) == 4 and all(isinstance(v, int) for v in bbox)):
        raise ParseError(f"{where}: bbox must be four integers")
    if not _number(doc["score"]) or not isinstance(doc["label"], str):
        raise ParseError(f"{where}: bad score or label")
    det_id = doc.get("id")
    if det_id is not None and not isinstance(det_id, int):
        raise ParseError(f"{where}: id must be an integer or null")
    try:
        return Detection(BBox(*bbox), mask, doc["score"], doc["label"], det_id)
    except EndosegError as exc:
        raise ParseError(f"{where}: {exc}") from exc


def metadata_from_document(doc) -> RunMetadata:
    if not isinstance(doc, dict):
        raise ParseError("metadata must be a JSON object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionUnsupported(f"schema_version {version!r} (supported: {SCHEMA_VERSION})")
    _keys(doc, TOP_KEYS, "metadata")
    video = doc["video"]
    _keys(video, VIDEO_KEYS, "video")
    if not (isinstance(video["width"], int) and isinstance(video["height"], int)
            and isinstance(video["frame_count"], int) and _number(video["fps"])):
        raise ParseError("video: width, height, frame_count must be integers and fps a number")
    _keys(doc["config"], CONFIG_KEYS, "config")
    timing = doc["timing"]
    _keys(timing, TIMING_KEYS, "timing")

    frames = []
    previous = -1
    if not isinstance(doc["frames"], list):
        raise ParseError("frames must be a list")
    for entry in doc["frames"]:
        _keys(entry, FRAME_KEYS, "frame entry")
        index = entry["frame_index"]
        if not isinstance(index, int) or index <= previous:
            raise ParseError(f"frame {index!r}: frame indices must be increasing integers")
        previous = index
        if not isinstance(entry["detections"], list):
            raise ParseError(f"frame {index}: detections must be a list")
        dets = tuple(_parse_detection(d, video, index, k) for k, d in enumerate(entry["detections"]))
        frames.append(FrameDetections(index, dets))

    timeline = doc["timeline"]
    if not isinstance(timeline, list) or len(timeline) != video["frame_count"]:
        raise ParseError("timeline length must equal video.frame_count")
    if not all(v is None or _number(v) for v in timeline):
        raise ParseError("timeline entries must be numbers or null")
    return RunMetadata(
        video=dict(video),
        config=dict(doc["config"]),
        frames=tuple(frames),
        timeline=tuple(timeline),
        timing=dict(timing),
        schema_version=version,
    )


def loads_metadata(text: str) -> RunMetadata:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(str(exc)) from exc
    return metadata_from_document(doc)


def parse_metadata(path) -> RunMetadata:
    return loads_metadata(Path(path).read_text(encoding="utf-8"))


def validate_metadata(meta: RunMetadata) -> list:
    """Consistency problems in ``meta``; an empty list means it is consistent."""
    problems = []
    n = meta.video["frame_count"]
    if len(meta.timeline) != n:
        problems.append(f"timeline has {len(meta.timeline)} entries for {n} frames")
    if any(fd.frame_index >= n for fd in meta.frames):
        problems.append("frame index beyond frame_count")
        return problems
    if n >= 1:
        expected = summarize_detections(meta.frames, n).per_frame_confidence
        for i, (got, want) in enumerate(zip(meta.timeline, expected)):
            if got != want:
                problems.append(f"timeline[{i}] is {got!r}, detections give {want!r}")
    return problems
