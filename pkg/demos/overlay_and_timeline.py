"""
Overlays and the detection timeline
===================================

Each output frame carries translucent masks with boxes and labels, and a
strip underneath that summarizes the whole video: one column per slice of
frames, colored by mean confidence, with a green marker at the current frame.
"""

import numpy as np
from PIL import Image

from endoseg import (
    Detection,
    Frame,
    FrameDetections,
    OverlayStyle,
    attach_timeline,
    composite_overlay,
    confidence_to_color,
    render_timeline,
    summarize_detections,
)
from endoseg.core import BinaryMask

# the color ramp runs from yellow at the threshold to dark red at certainty
for c in (0.5, 0.75, 1.0):
    print(c, confidence_to_color(c))

# a fake 160x120 frame with one elliptical "lesion"
h, w = 120, 160
yy, xx = np.mgrid[0:h, 0:w]
pixels = np.stack([80 + xx // 4, 40 + yy // 3, np.full_like(xx, 60)], axis=-1).astype(np.uint8)
blob = BinaryMask(((xx - 90) / 30.0) ** 2 + ((yy - 70) / 18.0) ** 2 <= 1)
det = Detection.from_mask(blob, 0.87)

# 40 frames, detections only in the middle third, strongest in the center
per_frame = []
for i in range(40):
    if 13 <= i < 27:
        per_frame.append(FrameDetections(i, (Detection.from_mask(blob, 0.55 + 0.03 * min(i - 13, 26 - i)),)))
    else:
        per_frame.append(FrameDetections(i, ()))
summary = summarize_detections(per_frame, 40)

frame = Frame(20, pixels)
annotated = composite_overlay(frame, FrameDetections(20, (det,)), OverlayStyle(alpha=0.45))
strip = render_timeline(summary, w, 10, current_frame=20)
out = attach_timeline(annotated, strip)
print("output frame:", out.width, "x", out.height)

Image.fromarray(out.pixels).save("overlay_demo.png")
print("wrote overlay_demo.png")
