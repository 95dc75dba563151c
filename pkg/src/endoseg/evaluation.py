"""COCO-style mask evaluation.

Predictions are matched greedily in descending score order, outcomes are
pooled over all frames, and AP is the mean interpolated precision at the
101 recall levels 0.00, 0.01, ..., 1.00.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Mapping, Optional, Sequence

import numpy as np

from .core import BinaryMask, Detection, Polygon, polygon_rasterize
from .errors import (
    DegeneratePolygon,
    DimensionMismatch,
    DuplicateId,
    NoGroundTruthNoPrediction,
    ParseError,
    SchemaError,
    UnknownFrame,
)

COCO_THRESHOLDS = tuple(round(0.50 + 0.05 * k, 2) for k in range(10))
RECALL_LEVELS = 101

__all__ = [
    "Annotation",
    "GroundTruthFrame",
    "GroundTruthSet",
    "MatchResult",
    "EvalReport",
    "mask_iou",
    "match_detections",
    "average_precision",
    "evaluate",
    "load_ground_truth",
    "save_ground_truth",
    "COCO_THRESHOLDS",
]


@dataclass(frozen=True)
class Annotation:
    id: object
    label: str
    polygons: tuple

    def rasterize(self, width: int, height: int) -> BinaryMask:
        bits = np.zeros((height, width), dtype=bool)
        for poly in self.polygons:
            bits |= polygon_rasterize(poly, width, height).bits
        return BinaryMask(bits)


@dataclass(frozen=True)
class GroundTruthFrame:
    id: object
    width: int
    height: int
    file_name: str
    annotations: tuple = ()

    def masks(self) -> list:
        return [a.rasterize(self.width, self.height) for a in self.annotations]


@dataclass(frozen=True)
class GroundTruthSet:
    frames: Dict[object, GroundTruthFrame]
    categories: tuple = ("lesion",)

    def __len__(self):
        return len(self.frames)


@dataclass(frozen=True)
class MatchResult:
    pairs: tuple
    unmatched_predictions: tuple
    unmatched_ground_truths: tuple


@dataclass(frozen=True)
class EvalReport:
    per_threshold_ap: Dict[float, float]
    map_50: Optional[float]
    map_50_95: float
    thresholds: tuple = field(default=COCO_THRESHOLDS)


def mask_iou(a: BinaryMask, b: BinaryMask) -> float:
    if a.bits.shape != b.bits.shape:
        raise DimensionMismatch(f"masks {a.width}x{a.height} and {b.width}x{b.height} differ")
    union = int(np.count_nonzero(a.bits | b.bits))
    if union == 0:
        return 0.0
    return int(np.count_nonzero(a.bits & b.bits)) / union


def _score_order(scores: Sequence[float]) -> list:
    return sorted(range(len(scores)), key=lambda i: (-scores[i], i))


def _iou_matrix(pred_masks: Sequence[BinaryMask], gts: Sequence[BinaryMask]) -> np.ndarray:
    if not pred_masks or not gts:
        return np.zeros((len(pred_masks), len(gts)))
    shape = gts[0].bits.shape
    for m in list(pred_masks) + list(gts):
        if m.bits.shape != shape:
            raise DimensionMismatch("all masks must share dimensions")
    P = np.stack([m.bits.ravel() for m in pred_masks]).astype(np.int64)
    G = np.stack([m.bits.ravel() for m in gts]).astype(np.int64)
    inter = P @ G.T
    union = P.sum(1)[:, None] + G.sum(1)[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(union > 0, inter / np.maximum(union, 1), 0.0)


def match_detections(preds: Sequence[Detection], gts: Sequence[BinaryMask], iou_threshold: float) -> MatchResult:
    """Greedy matching: each prediction, best score first, takes the unmatched
    ground truth of highest IoU when that IoU is at least ``iou_threshold``.
    """
    ious = _iou_matrix([p.binary_mask for p in preds], gts)
    taken = [False] * len(gts)
    pairs, unmatched = [], []
    for pi in _score_order([p.score for p in preds]):
        best, best_iou = -1, -1.0
        for gi in range(len(gts)):
            if not taken[gi] and ious[pi, gi] > best_iou:
                best, best_iou = gi, float(ious[pi, gi])
        if best >= 0 and best_iou >= iou_threshold:
            taken[best] = True
            pairs.append((pi, best, best_iou))
        else:
            unmatched.append(pi)
    return MatchResult(
        tuple(pairs),
        tuple(unmatched),
        tuple(gi for gi in range(len(gts)) if not taken[gi]),
    )


def average_precision(scored_outcomes: Sequence[tuple], total_ground_truths: int) -> float:
    """101-point interpolated AP over ``(score, is_true_positive)`` outcomes."""
    if total_ground_truths < 0:
        raise ValueError("total_ground_truths must be non-negative")
    if not scored_outcomes:
        if total_ground_truths == 0:
            raise NoGroundTruthNoPrediction("AP undefined without ground truths or predictions")
        return 0.0
    if total_ground_truths == 0:
        return 0.0
    order = _score_order([s for s, _ in scored_outcomes])
    tp_flags = np.array([bool(scored_outcomes[i][1]) for i in order])
    tp = np.cumsum(tp_flags)
    fp = np.cumsum(~tp_flags)
    precision = tp / (tp + fp)
    # envelope: best precision at this or any later (higher recall) point
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    total = 0.0
    for level in range(RECALL_LEVELS):
        # first point with recall >= level / 100, compared exactly in integers
        idx = int(np.searchsorted(tp * (RECALL_LEVELS - 1), level * total_ground_truths, side="left"))
        if idx < len(envelope):
            total += float(envelope[idx])
    return total / RECALL_LEVELS


def evaluate(preds: Mapping[object, Sequence[Detection]], gt: GroundTruthSet,
             thresholds: Sequence[float] = COCO_THRESHOLDS) -> EvalReport:
    for frame_id in preds:
        if frame_id not in gt.frames:
            raise UnknownFrame(frame_id)
    gt_masks = {fid: frame.masks() for fid, frame in gt.frames.items()}
    per_frame_ious = {}
    for fid, frame in gt.frames.items():
        dets = list(preds.get(fid, ()))
        for d in dets:
            if (d.mask.width, d.mask.height) != (frame.width, frame.height):
                raise DimensionMismatch(f"prediction on frame {fid!r} has size {d.mask.width}x{d.mask.height}")
        per_frame_ious[fid] = dets

    total_gt = sum(len(m) for m in gt_masks.values())
    per_threshold = {}
    for t in thresholds:
        outcomes = []
        for fid, dets in per_frame_ious.items():
            if not dets:
                continue
            match = match_detections(dets, gt_masks[fid], t)
            matched = {p for p, _, _ in match.pairs}
            outcomes.extend((dets[i].score, i in matched) for i in range(len(dets)))
        per_threshold[float(t)] = average_precision(outcomes, total_gt)
    values = list(per_threshold.values())
    return EvalReport(
        per_threshold_ap=per_threshold,
        map_50=per_threshold.get(0.5),
        map_50_95=float(np.mean(values)) if values else 0.0,
        thresholds=tuple(float(t) for t in thresholds),
    )


def _require(obj: dict, keys: Sequence[str], where: str) -> None:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected an object")
    missing = [k for k in keys if k not in obj]
    extra = [k for k in obj if k not in keys]
    if missing:
        raise SchemaError(f"{where}: missing field(s) {missing}")
    if extra:
        raise SchemaError(f"{where}: unknown field(s) {extra}")


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def parse_ground_truth(doc) -> GroundTruthSet:
    _require(doc, ("frames", "annotations", "categories"), "file")
    categories = doc["categories"]
    if not isinstance(categories, list) or not all(isinstance(c, str) for c in categories) or not categories:
        raise SchemaError("categories must be a non-empty list of strings")

    frames = {}
    for k, f in enumerate(doc["frames"]):
        _require(f, ("id", "width", "height", "file_name"), f"frames[{k}]")
        if not (_is_int(f["width"]) and _is_int(f["height"]) and f["width"] >= 1 and f["height"] >= 1):
            raise SchemaError(f"frames[{k}]: width and height must be positive integers")
        if f["id"] in frames:
            raise DuplicateId(f"duplicate frame id {f['id']!r}")
        frames[f["id"]] = {"meta": f, "annotations": []}

    seen = set()
    for k, a in enumerate(doc["annotations"]):
        _require(a, ("id", "frame_id", "label", "polygons"), f"annotations[{k}]")
        if a["id"] in seen:
            raise DuplicateId(f"duplicate annotation id {a['id']!r}")
        seen.add(a["id"])
        if a["frame_id"] not in frames:
            raise SchemaError(f"annotation {a['id']!r} references missing frame {a['frame_id']!r}")
        if a["label"] not in categories:
            raise SchemaError(f"annotation {a['id']!r} has undeclared label {a['label']!r}")
        meta = frames[a["frame_id"]]["meta"]
        if not isinstance(a["polygons"], list) or not a["polygons"]:
            raise SchemaError(f"annotation {a['id']!r} needs at least one polygon")
        polys = []
        for coords in a["polygons"]:
            if not isinstance(coords, list) or not all(isinstance(c, (int, float)) and not isinstance(c, bool)
                                                       for c in coords):
                raise SchemaError(f"annotation {a['id']!r}: polygon must be a flat list of numbers")
            try:
                poly = Polygon.from_flat(coords)
            except DegeneratePolygon as exc:
                raise SchemaError(f"annotation {a['id']!r}: {exc}") from exc
            if not poly.within(meta["width"], meta["height"]):
                raise SchemaError(f"annotation {a['id']!r}: polygon leaves the {meta['width']}x{meta['height']} frame")
            polys.append(poly)
        frames[a["frame_id"]]["annotations"].append(Annotation(a["id"], a["label"], tuple(polys)))

    out = {}
    for fid, entry in frames.items():
        m = entry["meta"]
        out[fid] = GroundTruthFrame(fid, m["width"], m["height"], m["file_name"], tuple(entry["annotations"]))
    return GroundTruthSet(out, tuple(categories))


def load_ground_truth(path) -> GroundTruthSet:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return parse_ground_truth(doc)


def ground_truth_document(gt: GroundTruthSet) -> dict:
    frames, annotations = [], []
    for frame in gt.frames.values():
        frames.append({"id": frame.id, "width": frame.width, "height": frame.height, "file_name": frame.file_name})
        for ann in frame.annotations:
            annotations.append({
                "id": ann.id,
                "frame_id": frame.id,
                "label": ann.label,
                "polygons": [[c for xy in p.vertices for c in xy] for p in ann.polygons],
            })
    return {"frames": frames, "annotations": annotations, "categories": list(gt.categories)}


def save_ground_truth(gt: GroundTruthSet, path) -> None:
    Path(path).write_text(json.dumps(ground_truth_document(gt), indent=2) + "\n", encoding="utf-8")
