import sys
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

sys.path.insert(0, str(Path(__file__).parent))

from endoseg.core import BinaryMask  # noqa: E402

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    for name, args in getattr(report, "criterion", ()):
        _criteria[args[0]] = (args[1], report.outcome)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        report.criterion = [("criterion", marker.args)]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, outcome = _criteria[number]
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{status}  criterion {number:>2}: {title}")


def make_mask(width, height, pixels):
    bits = np.zeros((height, width), dtype=bool)
    for x, y in pixels:
        bits[y, x] = True
    return BinaryMask(bits)


def write_clip(directory: Path, n_frames=30, width=64, height=64, seed=0):
    """Synthetic frame directory with smooth gradients plus noise."""
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width]
    for i in range(n_frames):
        base = np.stack([(xx * 4 + i * 3) % 256, (yy * 4) % 256, np.full_like(xx, 90 + i)], axis=-1)
        noise = rng.integers(0, 24, size=base.shape)
        px = np.clip(base + noise, 0, 255).astype(np.uint8)
        Image.fromarray(px).save(directory / f"frame_{i:04d}.png")
    return directory


@pytest.fixture
def clip(tmp_path):
    return write_clip(tmp_path / "clip")
