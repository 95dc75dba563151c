"""End-to-end video processing, batch execution and dataset utilities."""
from __future__ import annotations

import logging
import math
import os
import re
import shutil
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .core import round_half_away
from .errors import BadFractions, ConfigError, EndosegError, OutOfRange
from .evaluation import GroundTruthSet
from .ingest import FRAME_DIRECTORY, IO_MODES, VIDEO, Transcoder, VideoInfo, open_frame_sink, open_frame_source
from .metadata import RunMetadata, emit_metadata, parse_metadata
from .render import (
    OverlayStyle,
    attach_timeline,
    composite_overlay,
    default_bar_height,
    render_timeline,
    summarize_detections,
)
from .segmenter import (
    ExternalBackend,
    MockBackend,
    ReplayBackend,
    SegmenterConfig,
    _SplitMix64,
    segment_frame,
)

logger = logging.getLogger(__name__)

# measured GPU averages per 16:9 input resolution, milliseconds per frame
REFERENCE_PROFILES_MS = {
    (640, 360): 153.0,
    (1280, 720): 158.0,
    (1920, 1080): 170.0,
    (3840, 2160): 207.0,
}

__all__ = [
    "RunConfig",
    "RuntimeProfile",
    "ProcessResult",
    "BatchSummary",
    "make_backend",
    "model_tag",
    "process_video",
    "estimate_runtime",
    "reference_profile",
    "run_batch",
    "split_dataset",
]


@dataclass(frozen=True)
class RuntimeProfile:
    resolution: tuple
    avg_ms_per_frame: float

    def __post_init__(self):
        if not self.avg_ms_per_frame > 0:
            raise OutOfRange("avg_ms_per_frame must be positive")


@dataclass
class RunConfig:
    inputs: Sequence[str]
    models: Sequence[str]
    output_dir: str
    confidence_threshold: float = 0.50
    style: OverlayStyle = field(default_factory=OverlayStyle)
    bar_height: Optional[int] = None
    emit_metadata: bool = True
    io_mode: str = FRAME_DIRECTORY
    record_timing: bool = False
    transcoder: Transcoder = field(default_factory=Transcoder)
    runner_command: Sequence[str] = ("{model}",)
    workers: int = 1
    short_side_target: int = 800
    long_side_cap: int = 1333

    def validate(self) -> None:
        if not self.inputs:
            raise ConfigError("no input videos given")
        if not self.models:
            raise ConfigError("no models given")
        if self.io_mode not in IO_MODES:
            raise ConfigError(f"io mode must be one of {IO_MODES}")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        out = Path(self.output_dir).resolve()
        for inp in self.inputs:
            resolved = Path(inp).resolve()
            if out in (resolved, resolved.parent):
                raise ConfigError(f"output directory {out} is the directory of input {inp}")
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
        if not os.access(out, os.W_OK):
            raise ConfigError(f"output directory {out} is not writable")
        try:
            self.segmenter_config()
        except OutOfRange as exc:
            raise ConfigError(str(exc)) from exc

    def segmenter_config(self) -> SegmenterConfig:
        return SegmenterConfig(self.confidence_threshold, self.short_side_target, self.long_side_cap)


@dataclass(frozen=True)
class ProcessResult:
    input: str
    model: str
    output: Path
    metadata_path: Optional[Path]
    metadata: RunMetadata


@dataclass
class BatchSummary:
    results: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return 1 if self.failures else 0


def make_backend(spec: str, runner_command: Sequence[str] = ("{model}",)):
    kind, sep, arg = spec.partition(":")
    if not sep or not arg:
        raise ConfigError(f"model spec {spec!r} must look like mock:<seed>, replay:<path> or external:<path>")
    if kind == "mock":
        try:
            return MockBackend(int(arg, 0))
        except ValueError as exc:
            raise ConfigError(f"mock seed {arg!r} is not an integer") from exc
    if kind == "replay":
        return ReplayBackend(parse_metadata(arg), source=arg)
    if kind == "external":
        return ExternalBackend(arg, runner_command)
    raise ConfigError(f"unknown backend kind {kind!r}")


def model_tag(spec: str) -> str:
    kind, _, arg = spec.partition(":")
    if kind in ("replay", "external"):
        arg = Path(arg).name.split(".")[0]
    return re.sub(r"[^A-Za-z0-9_-]+", "-", f"{kind}-{arg}").strip("-")


def _input_stem(path: Path) -> str:
    return path.name if path.is_dir() else path.stem


def output_paths(cfg: RunConfig, input_path, spec: str) -> tuple:
    base = f"{_input_stem(Path(input_path))}__{model_tag(spec)}"
    out_dir = Path(cfg.output_dir)
    ext = "mp4" if cfg.io_mode == VIDEO else "frames"
    return out_dir / f"{base}.{ext}", out_dir / f"{base}.meta.json"


def _analyze(backend, frames, info: VideoInfo, seg_cfg: SegmenterConfig, workers: int) -> list:
    if isinstance(backend, ReplayBackend):
        backend.check_dimensions(info.width, info.height)
        return [backend.detect(f) for f in frames]
    if workers > 1 and getattr(backend, "concurrent_safe", False):
        results = []
        with ThreadPoolExecutor(max_workers=workers) as pool:
            batch = []
            for f in frames:
                batch.append(f)
                if len(batch) == 4 * workers:
                    results.extend(pool.map(lambda fr: segment_frame(backend, fr, seg_cfg), batch))
                    batch = []
            results.extend(pool.map(lambda fr: segment_frame(backend, fr, seg_cfg), batch))
        return results
    return [segment_frame(backend, f, seg_cfg) for f in frames]


def _config_echo(cfg: RunConfig, spec: str, bar_height: int, threshold: float) -> dict:
    return {
        "model": spec,
        "confidence_threshold": threshold,
        "short_side_target": cfg.short_side_target,
        "long_side_cap": cfg.long_side_cap,
        "io_mode": cfg.io_mode,
        "alpha": cfg.style.alpha,
        "draw_boxes": cfg.style.draw_boxes,
        "draw_labels": cfg.style.draw_labels,
        "bar_height": bar_height,
    }


def process_video(cfg: RunConfig, input_path, spec: str, backend=None) -> ProcessResult:
    """Analyze every frame, then render overlays and the timeline bar.

    Rendering happens in a second decoding pass so that the bar in every
    output frame shows the detections of the whole video.
    """
    input_path = Path(input_path)
    seg_cfg = cfg.segmenter_config()
    if backend is None:
        backend = make_backend(spec, cfg.runner_command)
    out_path, meta_path = output_paths(cfg, input_path, spec)
    # replayed scores were filtered at the recorded threshold; color them against it
    threshold = backend.threshold if isinstance(backend, ReplayBackend) else seg_cfg.confidence_threshold

    started = time.perf_counter()
    info, frames = open_frame_source(input_path, cfg.io_mode, cfg.transcoder)
    try:
        detections = _analyze(backend, frames, info, seg_cfg, cfg.workers)
    finally:
        close = getattr(backend, "close", None)
        if close is not None:
            close()
    analyzed = time.perf_counter()
    frame_count = len(detections)
    if frame_count == 0:
        raise EndosegError(f"{input_path} produced no frames")
    summary = summarize_detections(detections, frame_count)

    bar_h = cfg.bar_height or default_bar_height(info.height)
    out_info = VideoInfo(info.width, info.height + bar_h, info.fps, frame_count)
    _, frames = open_frame_source(input_path, cfg.io_mode, cfg.transcoder)
    _remove(out_path)
    sink = open_frame_sink(out_path, out_info, cfg.io_mode, cfg.transcoder)
    with sink:
        written = 0
        for frame, dets in zip(frames, detections):
            annotated = composite_overlay(frame, dets, cfg.style)
            strip = render_timeline(summary, info.width, bar_h, frame.index, threshold)
            sink.write(attach_timeline(annotated, strip))
            written += 1
        if written != frame_count:
            raise EndosegError(f"second pass yielded {written} frames, first pass {frame_count}")
    total_ms = (time.perf_counter() - started) * 1000.0

    if cfg.record_timing:
        timing = {"per_frame_ms_mean": (analyzed - started) * 1000.0 / frame_count, "total_ms": total_ms}
    else:
        timing = {"per_frame_ms_mean": None, "total_ms": None}
    meta = RunMetadata(
        video={"path": str(input_path), "width": info.width, "height": info.height,
               "fps": float(info.fps), "frame_count": frame_count},
        config=_config_echo(cfg, spec, bar_h, threshold),
        frames=tuple(detections),
        timeline=summary.per_frame_confidence,
        timing=timing,
    )
    written_meta = None
    if cfg.emit_metadata:
        try:
            written_meta = emit_metadata(meta, meta_path)
        except OSError:
            _remove(out_path)
            meta_path.unlink(missing_ok=True)
            raise
    logger.info("%s with %s: %d frames in %.0f ms", input_path, spec, frame_count, total_ms)
    return ProcessResult(str(input_path), spec, out_path, written_meta, meta)


def _remove(path: Path) -> None:
    if path.is_dir():
        shutil.rmtree(path, ignore_errors=True)
    else:
        path.unlink(missing_ok=True)


def run_batch(cfg: RunConfig) -> BatchSummary:
    """Process every (input, model) pair; a failing pair does not stop the rest."""
    cfg.validate()
    summary = BatchSummary()
    for inp in cfg.inputs:
        for spec in cfg.models:
            try:
                summary.results.append(process_video(cfg, inp, spec))
            except (EndosegError, OSError) as exc:
                logger.error("%s with %s failed: %s", inp, spec, exc)
                summary.failures.append((str(inp), spec, exc))
    return summary


def estimate_runtime(profile: RuntimeProfile, fps: float, duration_s: float) -> float:
    """Total processing seconds for ``duration_s`` of video at ``fps``."""
    if not fps > 0 or duration_s < 0 or not profile.avg_ms_per_frame > 0:
        raise OutOfRange("fps and per-frame time must be positive, duration non-negative")
    return profile.avg_ms_per_frame * fps * duration_s / 1000.0


def reference_profile(width: int, height: int) -> RuntimeProfile:
    """Reference per-frame time for the closest measured resolution by pixel count."""
    best = min(REFERENCE_PROFILES_MS, key=lambda wh: (abs(math.log(wh[0] * wh[1] / (width * height))), wh))
    return RuntimeProfile(best, REFERENCE_PROFILES_MS[best])


def format_estimate(total_seconds: float) -> str:
    return f"estimated_total_seconds={round_half_away(total_seconds)}"


def _seeded_permutation(n: int, seed: int) -> list:
    rng = _SplitMix64(seed)
    order = list(range(n))
    for i in range(n - 1, 0, -1):
        j = rng.below(i + 1)
        order[i], order[j] = order[j], order[i]
    return order


def split_dataset(gt: GroundTruthSet, seed: int, fractions: Sequence[float]) -> tuple:
    """Seeded train/val/test partition of the frames of ``gt``.

    Validation and test sizes are floored; the remainder goes to training.
    """
    if len(fractions) != 3 or any(not f > 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise BadFractions(f"fractions {tuple(fractions)} must be three positive values summing to 1")
    ids = list(gt.frames)
    n = len(ids)
    order = [ids[k] for k in _seeded_permutation(n, seed)]
    n_val = int(math.floor(fractions[1] * n + 1e-9))
    n_test = int(math.floor(fractions[2] * n + 1e-9))
    n_train = n - n_val - n_test
    parts = (order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:])
    return tuple(GroundTruthSet({fid: gt.frames[fid] for fid in part}, gt.categories) for part in parts)
