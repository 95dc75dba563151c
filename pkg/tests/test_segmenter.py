import sys
import textwrap
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_mask
from endoseg.core import Detection, FrameDetections, tight_bbox
from endoseg.errors import BackendFailure, DimensionMismatch, SchemaVersionUnsupported
from endoseg.ingest import Frame
from endoseg.metadata import RunMetadata
from endoseg.segmenter import (
    ExternalBackend,
    MockBackend,
    RawDetection,
    ReplayBackend,
    SegmenterConfig,
    compute_resize,
    filter_detections,
    mock_segment,
    replay_segment,
    segment_frame,
    splitmix64,
)

TABLE_RESOLUTIONS = [(640, 360), (1280, 720), (1920, 1080), (3840, 2160)]


def blank(width, height, index=0):
    return Frame(index, np.zeros((height, width, 3), np.uint8))


class FixedBackend:
    concurrent_safe = True

    def __init__(self, make):
        self.make = make
        self.seen = []

    def predict(self, frame):
        self.seen.append((frame.width, frame.height))
        return self.make(frame)


def test_resize_full_hd():
    w, h, scale = compute_resize(1920, 1080)
    assert (w, h) == (1333, 750)
    assert scale == 1333 / 1920


def test_resize_square_at_target():
    assert compute_resize(800, 800) == (800, 800, 1.0)


def test_resize_upscales_small_input():
    assert compute_resize(640, 360)[:2] == (1333, 750)


@pytest.mark.parametrize("w,h", TABLE_RESOLUTIONS)
def test_resize_table_resolutions(w, h):
    assert compute_resize(w, h)[:2] == (1333, 750)


def test_resize_portrait():
    # short side binds: 800 / 600 < 1333 / 700
    assert compute_resize(600, 700)[:2] == (800, 933)


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 5000), st.integers(1, 5000))
def test_resize_properties(w, h):
    cfg = SegmenterConfig()
    nw, nh, _ = compute_resize(w, h, cfg)
    short, long = min(nw, nh), max(nw, nh)
    assert short <= cfg.short_side_target + 1 and long <= cfg.long_side_cap + 1
    if nw > 1 and nh > 1:
        assert abs(short - cfg.short_side_target) <= 1 or abs(long - cfg.long_side_cap) <= 1
        scale = min(Fraction(cfg.short_side_target, min(w, h)), Fraction(cfg.long_side_cap, max(w, h)))
        assert abs(nw - w * scale) <= Fraction(1, 2) and abs(nh - h * scale) <= Fraction(1, 2)
        # aspect error in pixels, measured along the longer side
        if w >= h:
            assert abs(Fraction(nh, nw) - Fraction(h, w)) * nw <= 1
        else:
            assert abs(Fraction(nw, nh) - Fraction(w, h)) * nh <= 1


def test_filter_inclusive_threshold():
    dets = FrameDetections(0, tuple(Detection.from_mask(make_mask(4, 4, [(0, 0)]), s) for s in (0.49, 0.50, 0.90)))
    kept = filter_detections(dets, 0.50)
    assert [d.score for d in kept.detections] == [0.50, 0.90]
    assert filter_detections(dets, 0.0) == dets
    assert filter_detections(FrameDetections(3, ()), 0.5) == FrameDetections(3, ())


def test_segment_frame_empty_backend():
    out = segment_frame(FixedBackend(lambda f: []), blank(64, 48, 7))
    assert out == FrameDetections(7, ())


def test_segment_frame_full_mask_is_scale_invariant():
    backend = FixedBackend(lambda f: [RawDetection(np.ones((f.height, f.width), bool), 0.8)])
    out = segment_frame(backend, blank(1920, 1080))
    assert backend.seen == [(1333, 750)]
    (det,) = out.detections
    assert det.binary_mask.bits.shape == (1080, 1920) and det.binary_mask.bits.all()
    assert det.bbox.as_list() == [0, 0, 1920, 1080]


def test_segment_frame_filters():
    backend = FixedBackend(lambda f: [RawDetection(np.ones((f.height, f.width), bool), s) for s in (0.4, 0.6)])
    out = segment_frame(backend, blank(64, 64))
    assert [d.score for d in out.detections] == [0.6]


def test_segment_frame_maps_box_back():
    # a block covering the left half of the resized frame maps to the left half
    def make(f):
        m = np.zeros((f.height, f.width), bool)
        m[:, : f.width // 2] = True
        return [RawDetection(m, 0.9)]

    det = segment_frame(FixedBackend(make), blank(100, 50)).detections[0]
    assert det.bbox.as_list() == [0, 0, 50, 50]


def test_segment_frame_wraps_backend_errors():
    def explode(frame):
        raise RuntimeError("cuda on fire")

    with pytest.raises(BackendFailure, match="cuda on fire"):
        segment_frame(FixedBackend(explode), blank(32, 32))


def test_segment_frame_rejects_bad_mask_shape():
    with pytest.raises(BackendFailure):
        segment_frame(FixedBackend(lambda f: [RawDetection(np.ones((3, 3), bool), 0.9)]), blank(32, 32))


def test_segment_frame_drops_vanishing_masks():
    # a single preprocessed pixel that no original pixel center samples
    def make(f):
        m = np.zeros((f.height, f.width), bool)
        m[0, 0] = True
        return [RawDetection(m, 0.9)]

    assert segment_frame(FixedBackend(make), blank(64, 64)).detections == ()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**64 - 1), st.integers(0, 500), st.integers(16, 120), st.integers(16, 120))
def test_segment_frame_output_invariants(seed, index, w, h):
    out = segment_frame(MockBackend(seed), blank(w, h, index))
    for det in out.detections:
        assert det.score >= 0.5
        mask = det.binary_mask
        assert (mask.width, mask.height) == (w, h)
        assert tight_bbox(mask) == det.bbox


def test_splitmix64_reference_values():
    # first outputs for seed 0 of the published splitmix64 generator
    state, out1 = splitmix64(0)
    _, out2 = splitmix64(state)
    assert out1 == 0xE220A8397B1DCDAF
    assert out2 == 0x6E789E6AA1B965F4


def test_mock_is_deterministic():
    f = blank(200, 120, 5)
    a, b = mock_segment(42, f), mock_segment(42, f)
    assert len(a) == len(b)
    for x, y in zip(a, b):
        assert x.score == y.score and np.array_equal(x.mask, y.mask)


def test_mock_seeds_differ():
    differs = False
    for i in range(100):
        f = blank(100, 100, i)
        a, b = mock_segment(1, f), mock_segment(2, f)
        if len(a) != len(b) or any(x.score != y.score for x, y in zip(a, b)):
            differs = True
            break
    assert differs


def test_mock_masks_nonempty_and_scores_in_range():
    counts = set()
    for i in range(200):
        dets = mock_segment(9, blank(80, 60, i))
        counts.add(len(dets))
        for d in dets:
            assert d.mask.shape == (60, 80) and d.mask.any()
            assert 0.30 <= d.score <= 0.99
            assert d.label == "lesion"
    assert counts == {0, 1, 2, 3}


def _meta(frames, width=64, height=64, frame_count=3, version=1):
    return RunMetadata(
        video={"path": "x", "width": width, "height": height, "fps": 25.0, "frame_count": frame_count},
        config={"confidence_threshold": 0.5},
        frames=frames,
        timeline=(None,) * frame_count,
        schema_version=version,
    )


def test_replay_returns_stored_detections():
    det = Detection.from_mask(make_mask(64, 64, [(3, 3)]), 0.3)
    meta = _meta((FrameDetections(0, ()), FrameDetections(1, (det,)), FrameDetections(2, ())))
    # no re-filtering: 0.3 is below the default threshold but still returned
    assert replay_segment(meta, 1).detections == (det,)
    assert replay_segment(meta, 50) == FrameDetections(50, ())


def test_replay_dimension_mismatch():
    backend = ReplayBackend(_meta(()))
    with pytest.raises(DimensionMismatch):
        backend.detect(blank(32, 64))


def test_replay_schema_version():
    with pytest.raises(SchemaVersionUnsupported):
        ReplayBackend(_meta((), version=2))
    with pytest.raises(SchemaVersionUnsupported):
        replay_segment(_meta((), version=3), 0)


RUNNER = """
import json, sys
while True:
    header = sys.stdin.buffer.readline()
    if not header:
        break
    h = json.loads(header)
    sys.stdin.buffer.read(h["width"] * h["height"] * 3)
    n = h["width"] * h["height"]
    # whole frame as one detection, plus one with a low score
    det = {"score": 0.75, "label": "lesion", "mask_rle": {"size": [h["height"], h["width"]], "counts": [0, n]}}
    low = dict(det, score=0.2)
    sys.stdout.write(json.dumps({"detections": [det, low]}) + "\\n")
    sys.stdout.flush()
"""


def test_external_backend_protocol(tmp_path):
    runner = tmp_path / "runner.py"
    runner.write_text(textwrap.dedent(RUNNER))
    backend = ExternalBackend(str(runner), (sys.executable, "{model}"))
    try:
        out = [segment_frame(backend, blank(64, 48, i)) for i in range(2)]
    finally:
        backend.close()
    assert [len(o) for o in out] == [1, 1]
    assert out[1].detections[0].bbox.as_list() == [0, 0, 64, 48]


def test_external_backend_missing_runner(tmp_path):
    backend = ExternalBackend(str(tmp_path / "missing-model"))
    with pytest.raises(BackendFailure):
        segment_frame(backend, blank(32, 32))
