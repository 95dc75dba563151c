"""Frame input and output.

Two modes are supported. ``frame_directory`` reads and writes lossless PNG
files and is the canonical, codec-free path. ``video`` delegates decoding and
encoding to an external transcoder subprocess (ffmpeg by default) that
exchanges headerless RGB24 frames over pipes.
"""
from __future__ import annotations

import json
import logging
import shutil
import subprocess
import tempfile
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from PIL import Image

from .errors import (
    DecodeFailure,
    DimensionMismatch,
    EncodeFailure,
    InconsistentDimensions,
    NotFound,
    OutOfOrderFrame,
)

logger = logging.getLogger(__name__)

DEFAULT_FPS = 25.0
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}
VIDEO = "video"
FRAME_DIRECTORY = "frame_directory"
IO_MODES = (VIDEO, FRAME_DIRECTORY)

__all__ = [
    "Frame",
    "VideoInfo",
    "Transcoder",
    "open_frame_source",
    "open_frame_sink",
    "frame_file_name",
    "DEFAULT_FPS",
    "IO_MODES",
]


@dataclass(frozen=True, eq=False)
class Frame:
    """One RGB frame; ``pixels`` has shape ``(height, width, 3)`` and dtype uint8."""

    index: int
    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3 or px.dtype != np.uint8:
            raise DimensionMismatch(f"frame pixels must be HxWx3 uint8, got {px.shape} {px.dtype}")
        if px.flags.writeable:
            px = px.copy()
            px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return self.index == other.index and np.array_equal(self.pixels, other.pixels)

    __hash__ = None


@dataclass(frozen=True)
class VideoInfo:
    width: int
    height: int
    fps: float = DEFAULT_FPS
    frame_count: int = 0

    def __post_init__(self):
        if not self.fps > 0:
            raise DecodeFailure(f"fps must be positive, got {self.fps}")
        if self.width < 16 or self.height < 16:
            raise DecodeFailure(f"video dimensions {self.width}x{self.height} below 16x16")
        if self.frame_count < 0:
            raise DecodeFailure("negative frame count")

    @property
    def duration_s(self) -> float:
        return self.frame_count / self.fps


@dataclass(frozen=True)
class Transcoder:
    """Command templates for the external transcoder.

    Templates are argument lists; ``{input}``, ``{output}``, ``{width}``,
    ``{height}`` and ``{fps}`` placeholders are substituted per call.
    The probe command must print JSON of the form produced by
    ``ffprobe -of json -show_entries stream=width,height,r_frame_rate,nb_frames``.
    """

    probe: Sequence[str] = (
        "ffprobe", "-v", "error", "-select_streams", "v:0",
        "-show_entries", "stream=width,height,r_frame_rate,nb_frames",
        "-of", "json", "{input}",
    )
    decode: Sequence[str] = (
        "ffmpeg", "-v", "error", "-i", "{input}",
        "-f", "rawvideo", "-pix_fmt", "rgb24", "-",
    )
    encode: Sequence[str] = (
        "ffmpeg", "-v", "error", "-y",
        "-f", "rawvideo", "-pix_fmt", "rgb24", "-s", "{width}x{height}", "-r", "{fps}",
        "-i", "-", "-vf", "pad=ceil(iw/2)*2:ceil(ih/2)*2",
        "-c:v", "libx264", "-pix_fmt", "yuv420p", "{output}",
    )

    @staticmethod
    def render(template: Sequence[str], **values) -> list:
        return [part.format(**values) for part in template]


def frame_file_name(index: int) -> str:
    return f"{index:06d}.png"


def _read_rgb(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except OSError as exc:
        raise DecodeFailure(f"cannot read image {path}: {exc}") from exc


def _directory_source(path: Path):
    files = sorted(p for p in path.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise DecodeFailure(f"no frames in {path}")
    sizes = []
    for f in files:
        try:
            with Image.open(f) as im:
                sizes.append(im.size)
        except OSError as exc:
            raise DecodeFailure(f"cannot read image {f}: {exc}") from exc
    if len(set(sizes)) != 1:
        odd = next(f for f, s in zip(files, sizes) if s != sizes[0])
        raise InconsistentDimensions(f"{odd.name} is {sizes[files.index(odd)]}, expected {sizes[0]}")
    width, height = sizes[0]
    info = VideoInfo(width, height, DEFAULT_FPS, len(files))

    def frames() -> Iterator[Frame]:
        for i, f in enumerate(files):
            px = _read_rgb(f)
            if px.shape[:2] != (height, width):
                raise InconsistentDimensions(f"{f.name} changed size while reading")
            yield Frame(i, px)

    return info, frames()


def probe_video(path: Path, transcoder: Transcoder) -> VideoInfo:
    cmd = Transcoder.render(transcoder.probe, input=str(path))
    try:
        proc = subprocess.run(cmd, capture_output=True, check=False)
    except OSError as exc:
        raise DecodeFailure(f"cannot run probe {cmd[0]!r}: {exc}") from exc
    if proc.returncode != 0:
        raise DecodeFailure(f"probe exited with {proc.returncode}: {proc.stderr.decode(errors='replace').strip()}")
    try:
        stream = json.loads(proc.stdout)["streams"][0]
        width, height = int(stream["width"]), int(stream["height"])
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise DecodeFailure(f"unreadable probe output for {path}") from exc
    fps = DEFAULT_FPS
    rate = stream.get("r_frame_rate")
    if rate:
        try:
            value = Fraction(rate)
            if value > 0:
                fps = float(value)
        except (ValueError, ZeroDivisionError):
            pass
    try:
        frame_count = int(stream.get("nb_frames") or 0)
    except ValueError:
        frame_count = 0
    return VideoInfo(width, height, fps, frame_count)


def _video_source(path: Path, transcoder: Transcoder):
    info = probe_video(path, transcoder)

    def frames() -> Iterator[Frame]:
        cmd = Transcoder.render(transcoder.decode, input=str(path))
        frame_bytes = info.width * info.height * 3
        try:
            errlog = tempfile.TemporaryFile()
            proc = subprocess.Popen(cmd, stdout=subprocess.PIPE, stderr=errlog)
        except OSError as exc:
            raise DecodeFailure(f"cannot run decoder {cmd[0]!r}: {exc}") from exc
        index = 0
        try:
            while True:
                buf = proc.stdout.read(frame_bytes)
                if not buf:
                    break
                if len(buf) != frame_bytes:
                    raise DecodeFailure(f"short read at frame {index}: {len(buf)} of {frame_bytes} bytes")
                px = np.frombuffer(buf, dtype=np.uint8).reshape(info.height, info.width, 3)
                yield Frame(index, px)
                index += 1
        finally:
            proc.stdout.close()
            code = proc.wait()
            errlog.seek(0)
            stderr = errlog.read()
            errlog.close()
        if code != 0:
            raise DecodeFailure(f"decoder exited with {code}: {stderr.decode(errors='replace').strip()}")
        if index == 0:
            raise DecodeFailure("no frames")

    return info, frames()


def open_frame_source(path, mode: str = FRAME_DIRECTORY, transcoder: Transcoder | None = None):
    """Open ``path`` and return ``(VideoInfo, iterator of Frame)``.

    Directory sources are validated eagerly; video decoding starts lazily on
    first iteration.
    """
    path = Path(path)
    if not path.exists():
        raise NotFound(f"{path} does not exist")
    if mode == FRAME_DIRECTORY:
        if not path.is_dir():
            raise DecodeFailure(f"{path} is not a directory")
        return _directory_source(path)
    if mode == VIDEO:
        return _video_source(path, transcoder or Transcoder())
    raise ValueError(f"unknown io mode {mode!r}")


class _Sink:
    def __init__(self, path: Path, info: VideoInfo):
        self.path = path
        self.info = info
        self.next_index = 0
        self.closed = False

    def _check(self, frame: Frame) -> None:
        if self.closed:
            raise EncodeFailure("sink already finalized")
        if frame.index != self.next_index:
            raise OutOfOrderFrame(f"got frame {frame.index}, expected {self.next_index}")
        if (frame.width, frame.height) != (self.info.width, self.info.height):
            raise EncodeFailure(
                f"frame {frame.index} is {frame.width}x{frame.height}, sink expects "
                f"{self.info.width}x{self.info.height}"
            )

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.close()
        else:
            self.abort()
        return False


class DirectorySink(_Sink):
    def __init__(self, path: Path, info: VideoInfo):
        super().__init__(path, info)
        try:
            path.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise EncodeFailure(f"cannot create {path}: {exc}") from exc

    def write(self, frame: Frame) -> None:
        self._check(frame)
        try:
            Image.fromarray(np.ascontiguousarray(frame.pixels), "RGB").save(self.path / frame_file_name(frame.index))
        except OSError as exc:
            raise EncodeFailure(f"cannot write frame {frame.index}: {exc}") from exc
        self.next_index += 1

    def close(self) -> None:
        self.closed = True

    def abort(self) -> None:
        self.closed = True
        shutil.rmtree(self.path, ignore_errors=True)


class VideoSink(_Sink):
    def __init__(self, path: Path, info: VideoInfo, transcoder: Transcoder):
        super().__init__(path, info)
        cmd = Transcoder.render(transcoder.encode, output=str(path), width=info.width,
                                height=info.height, fps=info.fps)
        try:
            self.errlog = tempfile.TemporaryFile()
            self.proc = subprocess.Popen(cmd, stdin=subprocess.PIPE, stderr=self.errlog)
        except OSError as exc:
            raise EncodeFailure(f"cannot run encoder {cmd[0]!r}: {exc}") from exc

    def write(self, frame: Frame) -> None:
        self._check(frame)
        try:
            self.proc.stdin.write(np.ascontiguousarray(frame.pixels).tobytes())
        except (BrokenPipeError, OSError) as exc:
            self.abort()
            raise EncodeFailure(f"encoder pipe closed at frame {frame.index}") from exc
        self.next_index += 1

    def close(self) -> None:
        if self.closed:
            return
        self.closed = True
        try:
            self.proc.stdin.close()
        except BrokenPipeError:
            pass
        code = self.proc.wait()
        self.errlog.seek(0)
        stderr = self.errlog.read()
        self.errlog.close()
        if code != 0:
            self.path.unlink(missing_ok=True)
            raise EncodeFailure(f"encoder exited with {code}: {stderr.decode(errors='replace').strip()}")

    def abort(self) -> None:
        self.closed = True
        try:
            self.proc.stdin.close()
        except OSError:
            pass
        self.proc.kill()
        self.proc.wait()
        self.errlog.close()
        self.path.unlink(missing_ok=True)


def open_frame_sink(path, info: VideoInfo, mode: str = FRAME_DIRECTORY, transcoder: Transcoder | None = None):
    """Open a sink accepting frames ``0, 1, 2, ...`` of size ``info``.

    Works as a context manager: a clean exit finalizes, an exception removes
    the partial output.
    """
    path = Path(path)
    if not path.parent.exists():
        raise EncodeFailure(f"parent directory {path.parent} does not exist")
    if mode == FRAME_DIRECTORY:
        return DirectorySink(path, info)
    if mode == VIDEO:
        return VideoSink(path, info, transcoder or Transcoder())
    raise ValueError(f"unknown io mode {mode!r}")
