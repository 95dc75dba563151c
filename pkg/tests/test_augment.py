import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from endoseg.augment import (
    AnnotatedImage,
    _rotate_general,
    apply_ops,
    blur_image,
    crop_pair,
    desaturate_image,
    gaussian_kernel,
    perspective_pair,
    read_manifest,
    rotate_pair,
    solve_homography,
    write_manifest,
)
from endoseg.core import BBox, BinaryMask
from endoseg.errors import DegenerateQuad, DimensionMismatch, OutOfBounds, OutOfRange
from oracles import gaussian_weights


def sample(width=16, height=12, seed=0, n_masks=2):
    rng = np.random.default_rng(seed)
    image = rng.integers(0, 256, (height, width, 3), dtype=np.uint8)
    masks = []
    for _ in range(n_masks):
        bits = np.zeros((height, width), bool)
        x0, y0 = rng.integers(0, width // 2), rng.integers(0, height // 2)
        bits[y0:y0 + height // 3, x0:x0 + width // 3] = True
        masks.append(BinaryMask(bits))
    return AnnotatedImage(image, tuple(masks), ("lesion",) * n_masks)


def test_annotated_image_validates_shapes():
    with pytest.raises(DimensionMismatch):
        AnnotatedImage(np.zeros((4, 4, 3), np.uint8), (BinaryMask.empty(5, 4),), ("lesion",))
    with pytest.raises(DimensionMismatch):
        AnnotatedImage(np.zeros((4, 4, 3), np.uint8), (BinaryMask.empty(4, 4),), ())


def test_rotate_zero_is_identity():
    a = sample()
    assert rotate_pair(a, 0) == a


def test_rotate_full_turn_is_identity():
    a = sample()
    assert rotate_pair(a, 360) == a
    assert rotate_pair(rotate_pair(a, 90), 270) == a


def test_rotate_quarter_swaps_dimensions_and_keeps_area():
    a = sample(16, 12)
    r = rotate_pair(a, 90)
    assert (r.width, r.height) == (12, 16)
    assert [m.area for m in r.masks] == [m.area for m in a.masks]


def test_rotate_direction_is_counter_clockwise():
    # top-right pixel ends up top-left
    bits = np.zeros((4, 6), bool)
    bits[0, 5] = True
    a = AnnotatedImage(np.zeros((4, 6, 3), np.uint8), (BinaryMask(bits),), ("lesion",))
    assert rotate_pair(a, 90).masks[0].bits[0, 0]


def test_general_path_agrees_with_exact_quarter_turn():
    a = sample(10, 7, seed=3)
    exact = rotate_pair(a, 90)
    general = _rotate_general(a, 90.0)
    assert (general.width, general.height) == (exact.width, exact.height)
    assert general.masks == exact.masks
    assert np.array_equal(general.image, exact.image)


def test_rotate_general_grows_canvas():
    a = sample(20, 10)
    r = rotate_pair(a, 45)
    assert r.width >= 20 and r.height >= 10
    assert [m.width for m in r.masks] == [r.width] * 2
    assert r.labels == a.labels


def test_rotate_general_keeps_mask_area_roughly():
    bits = np.zeros((40, 40), bool)
    bits[10:30, 12:28] = True
    a = AnnotatedImage(np.zeros((40, 40, 3), np.uint8), (BinaryMask(bits),), ("lesion",))
    r = rotate_pair(a, 30)
    assert abs(r.masks[0].area - 320) <= 0.05 * 320


def test_crop_example():
    a = sample(16, 12)
    c = crop_pair(a, BBox(2, 3, 8, 6))
    assert (c.width, c.height) == (8, 6)
    assert np.array_equal(c.image, a.image[3:9, 2:10])
    for m in c.masks:
        assert m.width == 8 and m.height == 6


def test_crop_drops_masks_that_fall_outside():
    bits = np.zeros((10, 10), bool)
    bits[8:, 8:] = True
    keep = np.zeros((10, 10), bool)
    keep[1, 1] = True
    a = AnnotatedImage(np.zeros((10, 10, 3), np.uint8), (BinaryMask(bits), BinaryMask(keep)), ("a", "b"))
    c = crop_pair(a, BBox(0, 0, 5, 5))
    assert c.labels == ("b",)


def test_crop_out_of_bounds():
    with pytest.raises(OutOfBounds):
        crop_pair(sample(16, 12), BBox(10, 0, 8, 4))


def test_blur_leaves_masks_alone():
    a = sample()
    b = blur_image(a, 1.5)
    assert b.masks == a.masks and b.labels == a.labels


def test_blur_constant_image_unchanged():
    a = AnnotatedImage(np.full((9, 11, 3), 77, np.uint8))
    assert np.array_equal(blur_image(a, 2.0).image, a.image)


def test_blur_impulse_matches_separable_weights():
    img = np.zeros((21, 21, 3), np.uint8)
    img[10, 10] = 255
    out = blur_image(AnnotatedImage(img), 1.0).image.astype(int)
    w = gaussian_weights(1.0)
    center = len(w) // 2
    expected = np.floor(255 * np.outer(w, w) + 0.5).astype(int)
    assert out[10, 10, 0] == expected[center, center]
    assert np.array_equal(out[10 - center:10 + center + 1, 10 - center:10 + center + 1, 1], expected)


def test_gaussian_kernel_matches_oracle():
    for sigma in (0.5, 1.0, 2.3):
        assert np.allclose(gaussian_kernel(sigma), gaussian_weights(sigma), atol=1e-15)


def test_blur_rejects_nonpositive_sigma():
    with pytest.raises(OutOfRange):
        blur_image(sample(), 0)


def test_desaturate_full_red():
    a = AnnotatedImage(np.array([[[255, 0, 0]]], np.uint8))
    assert tuple(desaturate_image(a, 1.0).image[0, 0]) == (76, 76, 76)


def test_desaturate_gray_is_fixed_point():
    a = AnnotatedImage(np.full((3, 3, 3), 131, np.uint8))
    for amount in (0.0, 0.4, 1.0):
        assert np.array_equal(desaturate_image(a, amount).image, a.image)


def test_desaturate_zero_is_identity_and_masks_untouched():
    a = sample()
    d = desaturate_image(a, 0.0)
    assert d == a
    assert desaturate_image(a, 0.7).masks == a.masks


def test_desaturate_out_of_range():
    with pytest.raises(OutOfRange):
        desaturate_image(sample(), 1.5)
    with pytest.raises(OutOfRange):
        desaturate_image(sample(), -0.1)


def test_perspective_identity_quad():
    a = sample(16, 12)
    p = perspective_pair(a, [(0, 0), (16, 0), (16, 12), (0, 12)])
    assert p == a


def test_perspective_scale_two_quadruples_area():
    bits = np.zeros((20, 20), bool)
    bits[4:14, 5:15] = True
    a = AnnotatedImage(np.zeros((20, 20, 3), np.uint8), (BinaryMask(bits),), ("lesion",))
    p = perspective_pair(a, [(0, 0), (40, 0), (40, 40), (0, 40)])
    assert (p.width, p.height) == (40, 40)
    assert abs(p.masks[0].area - 400) <= 0.02 * 400


def test_perspective_keystone_keeps_labels_and_binarity():
    a = sample(16, 12)
    p = perspective_pair(a, [(2, 0), (14, 1), (16, 12), (0, 11)])
    assert p.labels == a.labels
    assert all(m.bits.dtype == bool for m in p.masks)


@pytest.mark.parametrize("quad", [
    [(0, 0), (5, 0), (10, 0), (0, 5)],       # collinear
    [(0, 0), (10, 10), (10, 0), (0, 10)],    # bow tie
    [(0, 0), (10, 0), (2, 2), (0, 10)],      # concave
    [(0, 0), (1, 0), (1, 1)],                # too few
])
def test_perspective_degenerate(quad):
    with pytest.raises(DegenerateQuad):
        perspective_pair(sample(), quad)


def test_solve_homography_maps_corners():
    src = [(0, 0), (10, 0), (10, 8), (0, 8)]
    dst = [(1, 2), (11, 1), (12, 9), (0, 10)]
    H = solve_homography(src, dst)
    for (x, y), (u, v) in zip(src, dst):
        p = H @ [x, y, 1]
        assert p[0] / p[2] == pytest.approx(u) and p[1] / p[2] == pytest.approx(v)


@settings(max_examples=50, deadline=None)
@given(arrays(bool, st.tuples(st.integers(1, 24), st.integers(1, 24))), st.sampled_from([90, 180, 270, -90]))
def test_quarter_rotations_preserve_area(bits, angle):
    h, w = bits.shape
    a = AnnotatedImage(np.zeros((h, w, 3), np.uint8), (BinaryMask(bits),), ("lesion",))
    r = rotate_pair(a, angle)
    assert r.masks[0].area == int(bits.sum())
    assert rotate_pair(r, -angle) == a


def test_apply_ops_and_manifest(tmp_path):
    a = sample(16, 12)
    ops = [{"op": "rotate", "angle": 90}, {"op": "blur", "sigma": 1.0}, {"op": "crop", "x": 0, "y": 0, "w": 6, "h": 6}]
    out = apply_ops(a, ops)
    assert (out.width, out.height) == (6, 6)
    with pytest.raises(ValueError):
        apply_ops(a, [{"op": "melt"}])
    path = tmp_path / "manifest.json"
    write_manifest(path, [{"source": "a.png", "output": "a_aug.png", "ops": ops}])
    assert read_manifest(path) == [{"source": "a.png", "output": "a_aug.png", "ops": ops}]
