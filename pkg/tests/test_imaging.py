"""Raster I/O, resizing, and mask algebra."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image as PILImage

from shadowcomp.imaging import (
    load_image,
    load_mask,
    load_matte,
    mask_area_ratio,
    mask_union,
    resize_bilinear,
    resize_mask,
    save_image,
    save_mask,
    save_matte,
)


def write_rgb_png(path, byte_array):
    PILImage.fromarray(np.asarray(byte_array, dtype=np.uint8), mode="RGB").save(path)


def write_gray_png(path, byte_array):
    PILImage.fromarray(np.asarray(byte_array, dtype=np.uint8), mode="L").save(path)


class TestLoadImage:
    def test_max_byte_maps_to_one(self, tmp_path):
        path = tmp_path / "white.png"
        write_rgb_png(path, [[(255, 255, 255)]])
        assert np.array_equal(load_image(path), np.ones((1, 1, 3)))

    def test_min_byte_maps_to_zero(self, tmp_path):
        path = tmp_path / "black.png"
        write_rgb_png(path, [[(0, 0, 0)]])
        assert np.array_equal(load_image(path), np.zeros((1, 1, 3)))

    def test_linear_byte_scaling(self, tmp_path):
        path = tmp_path / "mix.png"
        write_rgb_png(path, [[(128, 64, 0)]])
        expected = np.array([[[128 / 255, 64 / 255, 0.0]]])
        assert np.array_equal(load_image(path), expected)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_image(tmp_path / "nope.png")

    def test_non_rgb_rejected(self, tmp_path):
        path = tmp_path / "gray.png"
        write_gray_png(path, [[7]])
        with pytest.raises(ValueError, match="RGB"):
            load_image(path)


class TestSaveImage:
    def test_half_gray_within_quantization(self, tmp_path):
        path = tmp_path / "half.png"
        save_image(np.full((4, 4, 3), 0.5), path)
        assert np.abs(load_image(path) - 0.5).max() <= 1 / 255

    def test_zero_is_exact(self, tmp_path):
        path = tmp_path / "zero.png"
        save_image(np.zeros((3, 3, 3)), path)
        assert np.array_equal(load_image(path), np.zeros((3, 3, 3)))

    def test_byte_grid_round_trip_is_bit_exact(self, tmp_path):
        rng = np.random.default_rng(7)
        img = rng.integers(0, 256, size=(8, 8, 3)) / 255.0
        path = tmp_path / "grid.png"
        save_image(img, path)
        assert np.array_equal(load_image(path), img)

    def test_rejects_out_of_range(self, tmp_path):
        with pytest.raises(ValueError):
            save_image(np.full((2, 2, 3), 1.5), tmp_path / "bad.png")


class TestLoadMask:
    @pytest.mark.parametrize("byte,expected", [(255, 1.0), (0, 0.0), (128, 1.0), (127, 0.0)])
    def test_threshold_rule(self, tmp_path, byte, expected):
        path = tmp_path / "m.png"
        write_gray_png(path, [[byte]])
        assert load_mask(path)[0, 0] == expected

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        mask = (rng.random((9, 5)) < 0.5).astype(float)
        path = tmp_path / "m.png"
        save_mask(mask, path)
        assert np.array_equal(load_mask(path), mask)

    def test_rgb_rejected(self, tmp_path):
        path = tmp_path / "rgb.png"
        write_rgb_png(path, [[(1, 2, 3)]])
        with pytest.raises(ValueError, match="grayscale"):
            load_mask(path)


class TestMatteIO:
    def test_round_trip_within_quantization(self, tmp_path):
        rng = np.random.default_rng(5)
        matte = rng.random((6, 6))
        path = tmp_path / "a.png"
        save_matte(matte, path)
        assert np.abs(load_matte(path) - matte).max() <= 0.5 / 255 + 1e-12


class TestResizeBilinear:
    def test_identity(self):
        rng = np.random.default_rng(11)
        img = rng.random((13, 9, 3))
        assert np.array_equal(resize_bilinear(img, 13, 9), img)

    def test_constant_preserved_exactly(self):
        img = np.full((4, 6, 3), 0.7)
        for h, w in [(9, 2), (3, 17), (50, 50)]:
            assert np.array_equal(resize_bilinear(img, h, w), np.full((h, w, 3), 0.7))

    def test_two_row_column_upsampled(self):
        # Half-pixel centers for 2 -> 4 sample at -0.25, 0.25, 0.75, 1.25
        # (clamped), interpolating the (0, 1) column to (0, 0.25, 0.75, 1).
        img = np.zeros((2, 1, 3))
        img[1] = 1.0
        out = resize_bilinear(img, 4, 1)
        expected = np.array([0.0, 0.25, 0.75, 1.0])
        np.testing.assert_allclose(out[:, 0, 0], expected, atol=1e-15)

    def test_output_stays_in_range(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            img = rng.random((7, 11, 3))
            out = resize_bilinear(img, int(rng.integers(1, 30)), int(rng.integers(1, 30)))
            assert out.min() >= 0.0 and out.max() <= 1.0

    def test_zero_target_rejected(self):
        with pytest.raises(ValueError):
            resize_bilinear(np.zeros((3, 3, 3)), 0, 4)


class TestResizeMask:
    def test_all_ones_any_size(self):
        mask = np.ones((5, 7))
        out = resize_mask(mask, 12, 3)
        assert np.array_equal(out, np.ones((12, 3)))

    def test_identity(self):
        rng = np.random.default_rng(4)
        mask = (rng.random((8, 8)) < 0.4).astype(float)
        assert np.array_equal(resize_mask(mask, 8, 8), mask)

    def test_single_pixel_upscale_thresholds_bilinear_field(self):
        # 1D field (1, 0) sampled at 4 points gives (1, .75, .25, 0); the
        # 2D field is its outer product, so only the top-left 2x2 block
        # reaches 0.5.
        mask = np.zeros((2, 2))
        mask[0, 0] = 1.0
        out = resize_mask(mask, 4, 4)
        expected = np.zeros((4, 4))
        expected[:2, :2] = 1.0
        assert np.array_equal(out, expected)

    def test_output_is_binary(self):
        rng = np.random.default_rng(9)
        mask = (rng.random((10, 10)) < 0.5).astype(float)
        out = resize_mask(mask, 23, 17)
        assert set(np.unique(out)) <= {0.0, 1.0}


class TestMaskUnion:
    def test_disjoint_pixels(self):
        a = np.zeros((3, 3))
        a[0, 0] = 1.0
        b = np.zeros((3, 3))
        b[2, 2] = 1.0
        out = mask_union([a, b])
        assert out[0, 0] == 1.0 and out[2, 2] == 1.0 and out.sum() == 2.0

    def test_self_union(self):
        rng = np.random.default_rng(1)
        mask = (rng.random((6, 6)) < 0.5).astype(float)
        assert np.array_equal(mask_union([mask, mask]), mask)

    def test_complement_pair_covers(self):
        rng = np.random.default_rng(8)
        mask = (rng.random((6, 6)) < 0.5).astype(float)
        assert np.array_equal(mask_union([mask, 1.0 - mask]), np.ones((6, 6)))

    def test_empty_list_rejected(self):
        with pytest.raises(ValueError):
            mask_union([])

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            mask_union([np.zeros((2, 2)), np.zeros((3, 3))])

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000))
    def test_commutative_associative_idempotent(self, seed):
        rng = np.random.default_rng(seed)
        a, b, c = ((rng.random((5, 5)) < 0.5).astype(float) for _ in range(3))
        assert np.array_equal(mask_union([a, b]), mask_union([b, a]))
        assert np.array_equal(mask_union([mask_union([a, b]), c]),
                              mask_union([a, mask_union([b, c])]))
        assert np.array_equal(mask_union([a, a]), a)


class TestMaskAreaRatio:
    def test_empty_and_full(self):
        assert mask_area_ratio(np.zeros((4, 4))) == 0.0
        assert mask_area_ratio(np.ones((4, 4))) == 1.0

    def test_counting_at_bin_edge_scale(self):
        mask = np.zeros((256, 256))
        mask.flat[:1311] = 1.0
        ratio = mask_area_ratio(mask)
        assert ratio == 1311 / 65536
        assert 0.02 < ratio <= 0.04

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000))
    def test_additive_over_disjoint_masks(self, seed):
        rng = np.random.default_rng(seed)
        a = (rng.random((8, 8)) < 0.3).astype(float)
        b = (rng.random((8, 8)) < 0.3).astype(float) * (1.0 - a)
        assert mask_area_ratio(mask_union([a, b])) == pytest.approx(
            mask_area_ratio(a) + mask_area_ratio(b), abs=1e-12)
