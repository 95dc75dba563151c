"""Lesion segmentation video annotation toolkit.

Per-frame instance segmentation through pluggable backends, mask overlays
with a confidence-colored detection timeline, JSON run metadata, COCO-style
mask mAP evaluation and joint image+mask augmentation.
"""
from .core import (
    BBox,
    BinaryMask,
    Detection,
    FrameDetections,
    Polygon,
    RleMask,
    polygon_rasterize,
    rle_decode,
    rle_encode,
    tight_bbox,
)
from .ingest import Frame, Transcoder, VideoInfo, open_frame_sink, open_frame_source
from .segmenter import (
    MockBackend,
    ReplayBackend,
    SegmenterConfig,
    compute_resize,
    filter_detections,
    mock_segment,
    replay_segment,
    segment_frame,
)
from .render import (
    OverlayStyle,
    TimelineSummary,
    attach_timeline,
    composite_overlay,
    confidence_to_color,
    render_timeline,
    summarize_detections,
)
from .evaluation import (
    GroundTruthSet,
    average_precision,
    evaluate,
    load_ground_truth,
    mask_iou,
    match_detections,
    parse_ground_truth,
)
from .augment import (
    AnnotatedImage,
    apply_ops,
    blur_image,
    crop_pair,
    desaturate_image,
    perspective_pair,
    rotate_pair,
)
from .metadata import RunMetadata, emit_metadata, parse_metadata
from .pipeline import RunConfig, RuntimeProfile, estimate_runtime, process_video, run_batch, split_dataset

__version__ = "0.1.0"

__all__ = [
    "Frame",
    "Transcoder",
    "VideoInfo",
    "open_frame_sink",
    "open_frame_source",
    "BBox",
    "BinaryMask",
    "Detection",
    "FrameDetections",
    "Polygon",
    "RleMask",
    "polygon_rasterize",
    "rle_decode",
    "rle_encode",
    "tight_bbox",
    "MockBackend",
    "ReplayBackend",
    "SegmenterConfig",
    "compute_resize",
    "filter_detections",
    "mock_segment",
    "replay_segment",
    "segment_frame",
    "OverlayStyle",
    "TimelineSummary",
    "attach_timeline",
    "composite_overlay",
    "confidence_to_color",
    "render_timeline",
    "summarize_detections",
    "GroundTruthSet",
    "average_precision",
    "evaluate",
    "load_ground_truth",
    "mask_iou",
    "match_detections",
    "parse_ground_truth",
    "AnnotatedImage",
    "apply_ops",
    "blur_image",
    "crop_pair",
    "desaturate_image",
    "perspective_pair",
    "rotate_pair",
    "RunMetadata",
    "emit_metadata",
    "parse_metadata",
    "RunConfig",
    "RuntimeProfile",
    "estimate_runtime",
    "process_video",
    "run_batch",
    "split_dataset",
]
