"""
Scoring predictions against annotations
=======================================

Predictions are matched to ground truth greedily, best score first, and
average precision is read off the interpolated precision-recall curve at
101 recall levels, for IoU thresholds 0.50 to 0.95.
"""

import numpy as np

from endoseg import Detection, average_precision, evaluate, mask_iou, parse_ground_truth
from endoseg.core import BinaryMask

# two annotated frames, one lesion each (polygons in pixel coordinates)
gt = parse_ground_truth({
    "frames": [{"id": 0, "width": 32, "height": 32, "file_name": "f0.png"},
               {"id": 1, "width": 32, "height": 32, "file_name": "f1.png"}],
    "annotations": [
        {"id": 1, "frame_id": 0, "label": "lesion", "polygons": [[4, 4, 20, 4, 20, 20, 4, 20]]},
        {"id": 2, "frame_id": 1, "label": "lesion", "polygons": [[10, 2, 30, 12, 12, 28]]},
    ],
    "categories": ["lesion"],
})
truth = {fid: frame.masks() for fid, frame in gt.frames.items()}

# a perfect prediction on frame 0; a slightly shifted one on frame 1
shifted = np.roll(truth[1][0].bits, 2, axis=1)
preds = {
    0: [Detection.from_mask(truth[0][0], 0.92)],
    1: [Detection.from_mask(BinaryMask(shifted), 0.81)],
}
print("IoU on frame 1:", round(mask_iou(truth[1][0], BinaryMask(shifted)), 3))

report = evaluate(preds, gt)
for t, ap in report.per_threshold_ap.items():
    print(f"AP@{t:.2f} = {ap:.3f}")
print("mAP@.50 =", report.map_50, " mAP@[.50:.95] =", round(report.map_50_95, 3))

# a false positive ranked above a true positive halves the AP
print(average_precision([(0.9, False), (0.8, True)], 1))
