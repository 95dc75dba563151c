import sys
import textwrap

import numpy as np
import pytest
from PIL import Image

from conftest import write_clip
from endoseg.errors import (
    DecodeFailure,
    EncodeFailure,
    InconsistentDimensions,
    NotFound,
    OutOfOrderFrame,
)
from endoseg.ingest import Frame, Transcoder, VideoInfo, frame_file_name, open_frame_sink, open_frame_source


# a stand-in "container": an .npy array of shape (n, h, w, 3)
FAKE_PROBE = """
import json, sys
import numpy as np
a = np.load(sys.argv[1], mmap_mode="r")
print(json.dumps({"streams": [{"width": a.shape[2], "height": a.shape[1],
                               "r_frame_rate": "30000/1001", "nb_frames": str(a.shape[0])}]}))
"""
FAKE_DECODER = """
import sys
import numpy as np
a = np.load(sys.argv[1])
data = a.tobytes()
if len(sys.argv) > 2:
    data = data[:-int(sys.argv[2])]
sys.stdout.buffer.write(data)
"""
FAKE_ENCODER = """
import sys
data = sys.stdin.buffer.read()
w, h = (int(v) for v in sys.argv[2].split("x"))
if len(data) % (w * h * 3):
    sys.exit(3)
open(sys.argv[1], "wb").write(data)
"""


@pytest.fixture
def fake_transcoder(tmp_path):
    scripts = {}
    for name, body in (("probe", FAKE_PROBE), ("decode", FAKE_DECODER), ("encode", FAKE_ENCODER)):
        path = tmp_path / f"fake_{name}.py"
        path.write_text(textwrap.dedent(body))
        scripts[name] = str(path)
    return Transcoder(
        probe=(sys.executable, scripts["probe"], "{input}"),
        decode=(sys.executable, scripts["decode"], "{input}"),
        encode=(sys.executable, scripts["encode"], "{output}", "{width}x{height}"),
    )


def test_directory_source(tmp_path):
    d = tmp_path / "frames"
    d.mkdir()
    for i in range(3):
        Image.fromarray(np.full((64, 64, 3), i * 10, np.uint8)).save(d / f"{i}.png")
    info, frames = open_frame_source(d, "frame_directory")
    assert info == VideoInfo(64, 64, 25.0, 3)
    frames = list(frames)
    assert [f.index for f in frames] == [0, 1, 2]
    assert frames[2].pixels[0, 0, 0] == 20


def test_directory_source_lexicographic_order(tmp_path):
    d = tmp_path / "frames"
    d.mkdir()
    for name, value in (("b.png", 2), ("a.png", 1), ("c.png", 3)):
        Image.fromarray(np.full((16, 16, 3), value, np.uint8)).save(d / name)
    _, frames = open_frame_source(d)
    assert [int(f.pixels[0, 0, 0]) for f in frames] == [1, 2, 3]


def test_empty_directory(tmp_path):
    (tmp_path / "empty").mkdir()
    with pytest.raises(DecodeFailure, match="no frames"):
        open_frame_source(tmp_path / "empty")


def test_missing_source(tmp_path):
    with pytest.raises(NotFound):
        open_frame_source(tmp_path / "nope")


def test_inconsistent_dimensions(tmp_path):
    d = tmp_path / "frames"
    d.mkdir()
    Image.fromarray(np.zeros((32, 32, 3), np.uint8)).save(d / "0.png")
    Image.fromarray(np.zeros((32, 48, 3), np.uint8)).save(d / "1.png")
    with pytest.raises(InconsistentDimensions):
        open_frame_source(d)


def test_hour_of_video_frame_count():
    assert VideoInfo(1280, 720, 25.0, 25 * 3600).frame_count == 90000
    assert VideoInfo(1280, 720, 25.0, 90000).duration_s == 3600


def test_sink_names_and_order(tmp_path):
    info = VideoInfo(64, 64)
    out = tmp_path / "out"
    with open_frame_sink(out, info) as sink:
        for i in range(3):
            sink.write(Frame(i, np.zeros((64, 64, 3), np.uint8)))
    assert sorted(p.name for p in out.iterdir()) == ["000000.png", "000001.png", "000002.png"]
    assert frame_file_name(12) == "000012.png"


def test_sink_out_of_order(tmp_path):
    sink = open_frame_sink(tmp_path / "out", VideoInfo(16, 16))
    for i in range(4):
        sink.write(Frame(i, np.zeros((16, 16, 3), np.uint8)))
    with pytest.raises(OutOfOrderFrame):
        sink.write(Frame(5, np.zeros((16, 16, 3), np.uint8)))


def test_sink_abort_removes_output(tmp_path):
    out = tmp_path / "out"
    with pytest.raises(RuntimeError):
        with open_frame_sink(out, VideoInfo(16, 16)) as sink:
            sink.write(Frame(0, np.zeros((16, 16, 3), np.uint8)))
            raise RuntimeError("boom")
    assert not out.exists()


def test_sink_rejects_wrong_size(tmp_path):
    sink = open_frame_sink(tmp_path / "out", VideoInfo(16, 16))
    with pytest.raises(EncodeFailure):
        sink.write(Frame(0, np.zeros((17, 16, 3), np.uint8)))


def test_directory_roundtrip_lossless(tmp_path):
    src = write_clip(tmp_path / "clip", n_frames=5)
    info, frames = open_frame_source(src)
    frames = list(frames)
    with open_frame_sink(tmp_path / "copy", info) as sink:
        for f in frames:
            sink.write(f)
    _, again = open_frame_source(tmp_path / "copy")
    assert list(again) == frames


def test_video_mode_with_fake_transcoder(tmp_path, fake_transcoder):
    data = np.random.default_rng(0).integers(0, 256, (4, 20, 24, 3), dtype=np.uint8)
    video = tmp_path / "clip.npy"
    np.save(video, data)
    info, frames = open_frame_source(video, "video", fake_transcoder)
    assert (info.width, info.height, info.frame_count) == (24, 20, 4)
    assert info.fps == pytest.approx(29.97, abs=1e-2)
    frames = list(frames)
    assert len(frames) == 4
    assert all(np.array_equal(f.pixels, data[f.index]) for f in frames)

    out = tmp_path / "out.raw"
    with open_frame_sink(out, info, "video", fake_transcoder) as sink:
        for f in frames:
            sink.write(f)
    assert out.read_bytes() == data.tobytes()


def test_video_short_read(tmp_path, fake_transcoder):
    np.save(tmp_path / "clip.npy", np.zeros((2, 16, 16, 3), np.uint8))
    broken = Transcoder(probe=fake_transcoder.probe, decode=tuple(fake_transcoder.decode) + ("5",))
    _, frames = open_frame_source(tmp_path / "clip.npy", "video", broken)
    with pytest.raises(DecodeFailure, match="short read"):
        list(frames)


def test_video_decoder_failure(tmp_path, fake_transcoder):
    np.save(tmp_path / "clip.npy", np.zeros((2, 16, 16, 3), np.uint8))
    failing = Transcoder(probe=fake_transcoder.probe, decode=(sys.executable, "-c", "import sys; sys.exit(4)"))
    _, frames = open_frame_source(tmp_path / "clip.npy", "video", failing)
    with pytest.raises(DecodeFailure):
        list(frames)


def test_video_encoder_failure(tmp_path, fake_transcoder):
    failing = Transcoder(encode=(sys.executable, "-c", "import sys; sys.stdin.buffer.read(); sys.exit(2)"))
    sink = open_frame_sink(tmp_path / "o.raw", VideoInfo(16, 16), "video", failing)
    sink.write(Frame(0, np.zeros((16, 16, 3), np.uint8)))
    with pytest.raises(EncodeFailure):
        sink.close()


def test_missing_transcoder_binary(tmp_path):
    np.save(tmp_path / "clip.npy", np.zeros((1, 16, 16, 3), np.uint8))
    with pytest.raises(DecodeFailure):
        open_frame_source(tmp_path / "clip.npy", "video", Transcoder(probe=("no-such-binary-xyz", "{input}")))


def test_frame_is_read_only():
    f = Frame(0, np.zeros((4, 4, 3), np.uint8))
    with pytest.raises(ValueError):
        f.pixels[0, 0, 0] = 1
