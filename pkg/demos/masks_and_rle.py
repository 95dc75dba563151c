"""
Masks, polygons and run-length encoding
=======================================

A lesion mask starts life as an annotator's polygon, gets rasterized into
a boolean image and is stored as a short list of run lengths.
"""

import numpy as np

from endoseg import Polygon, polygon_rasterize, rle_decode, rle_encode, tight_bbox

# a small pentagon on a 12x8 canvas; pixel centers inside it are foreground
poly = Polygon([(1, 1), (9, 2), (11, 6), (5, 7.5), (0.5, 5)])
mask = polygon_rasterize(poly, 12, 8)
for row in mask.bits:
    print("".join("#" if b else "." for b in row))

# runs alternate background/foreground, scanning down each column in turn
rle = rle_encode(mask)
print("runs:", rle.runs)
print("area:", mask.area, "box:", tight_bbox(mask))

# decoding gives back exactly the same pixels
assert rle_decode(rle) == mask

# a mask that starts on foreground gets an explicit zero-length first run
full = rle_encode(polygon_rasterize(Polygon([(0, 0), (2, 0), (2, 2), (0, 2)]), 2, 2))
print("full 2x2:", full.runs)

# random masks compress poorly, smooth ones very well
rng = np.random.default_rng(0)
noisy = rle_encode(type(mask)(rng.random((64, 64)) < 0.5))
blob = rle_encode(polygon_rasterize(Polygon([(10, 10), (50, 12), (40, 55)]), 64, 64))
print("runs for noise:", len(noisy.runs), "for a triangle:", len(blob.runs))
