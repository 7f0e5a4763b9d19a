"""Affine darkening model: regression, composition, matte, gradients."""

import numpy as np
import pytest

from shadowcomp.illumination import (
    CompositionGradients,
    ShadowParams,
    compose,
    compose_gradients,
    darken,
    estimate_params,
    fill_shadow,
    invert,
    synthesize_matte,
)


def ols_oracle(x, y):
    """Closed-form simple regression via explicit normal equations."""
    n = len(x)
    sx = sum(float(v) for v in x)
    sy = sum(float(v) for v in y)
    sxx = sum(float(v) * float(v) for v in x)
    sxy = sum(float(a) * float(b) for a, b in zip(x, y))
    denom = n * sxx - sx * sx
    w = (n * sxy - sx * sy) / denom
    return w, (sy - w * sx) / n


def random_fixture(rng, size=16, w_range=(0.2, 0.95), b_range=(0.0, 0.1)):
    """Unclamped image/params/mask triple with a non-constant masked region."""
    img = rng.uniform(0.05, 0.9, size=(size, size, 3))
    params = ShadowParams(rng.uniform(*w_range, 3), rng.uniform(*b_range, 3))
    mask = np.zeros((size, size))
    top, left = rng.integers(0, size - 8, 2)
    mask[top:top + 8, left:left + 8] = 1.0
    return img, params, mask


class TestDarken:
    def test_identity_params(self):
        rng = np.random.default_rng(0)
        img = rng.random((5, 5, 3))
        assert np.array_equal(darken(img, ShadowParams.identity()), img)

    def test_affine_value(self):
        img = np.full((2, 2, 3), 0.8)
        params = ShadowParams(np.full(3, 0.5), np.full(3, 0.1))
        np.testing.assert_allclose(darken(img, params), 0.5, atol=1e-15)

    def test_clamps_at_upper_bound(self):
        img = np.full((2, 2, 3), 0.8)
        params = ShadowParams(np.full(3, 2.0), np.zeros(3))
        assert np.array_equal(darken(img, params), np.ones((2, 2, 3)))


class TestInvert:
    def test_identity_is_self_inverse(self):
        inv = invert(ShadowParams.identity())
        assert np.array_equal(inv.w, np.ones(3))
        assert np.array_equal(inv.b, np.zeros(3))

    def test_algebraic_inverse(self):
        params = ShadowParams(np.full(3, 0.5), np.full(3, 0.1))
        inv = invert(params)
        np.testing.assert_allclose(inv.w, 2.0, atol=1e-15)
        np.testing.assert_allclose(inv.b, -0.2, atol=1e-15)

    def test_zero_w_rejected(self):
        with pytest.raises(ValueError, match="not invertible"):
            invert(ShadowParams(np.array([0.5, 0.0, 0.5]), np.zeros(3)))

    def test_involution(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            params = ShadowParams(rng.uniform(0.2, 0.95, 3), rng.uniform(0.0, 0.1, 3))
            twice = invert(invert(params))
            np.testing.assert_allclose(twice.w, params.w, atol=1e-12)
            np.testing.assert_allclose(twice.b, params.b, atol=1e-12)

    def test_round_trip_on_unclamped_image(self):
        rng = np.random.default_rng(5)
        img = rng.uniform(0.1, 0.9, (6, 6, 3))
        params = ShadowParams(np.full(3, 0.6), np.full(3, 0.05))
        np.testing.assert_allclose(darken(darken(img, params), invert(params)),
                                   img, atol=1e-12)


class TestEstimateParams:
    def test_recovers_applied_params_against_ols_oracle(self):
        rng = np.random.default_rng(10)
        img, params, mask = random_fixture(rng)
        shadowed = darken(img, params)
        est = estimate_params(img, shadowed, mask)
        np.testing.assert_allclose(est.w, params.w, atol=1e-10)
        np.testing.assert_allclose(est.b, params.b, atol=1e-10)
        sel = mask == 1.0
        for k in range(3):
            w_oracle, b_oracle = ols_oracle(img[..., k][sel], shadowed[..., k][sel])
            assert est.w[k] == pytest.approx(w_oracle, abs=1e-9)
            assert est.b[k] == pytest.approx(b_oracle, abs=1e-9)

    def test_identical_images_give_identity(self):
        rng = np.random.default_rng(11)
        img = rng.random((8, 8, 3))
        mask = np.ones((8, 8))
        est = estimate_params(img, img, mask)
        np.testing.assert_allclose(est.w, 1.0, atol=1e-12)
        np.testing.assert_allclose(est.b, 0.0, atol=1e-12)

    def test_degenerate_channel_falls_back_to_offset(self):
        img = np.full((4, 4, 3), 0.6)
        target = img - 0.3
        est = estimate_params(img, target, np.ones((4, 4)))
        np.testing.assert_allclose(est.w, 1.0, atol=1e-15)
        np.testing.assert_allclose(est.b, -0.3, atol=1e-15)

    def test_too_few_masked_pixels_rejected(self):
        img = np.zeros((4, 4, 3))
        mask = np.zeros((4, 4))
        mask[0, 0] = 1.0
        with pytest.raises(ValueError, match="at least 2"):
            estimate_params(img, img, mask)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            estimate_params(np.zeros((4, 4, 3)), np.zeros((4, 4, 3)), np.ones((5, 5)))

    def test_returned_fit_is_a_local_minimum(self):
        rng = np.random.default_rng(12)
        img = rng.uniform(0.1, 0.9, (12, 12, 3))
        noisy = np.clip(img * 0.5 + 0.1 + rng.normal(0, 0.01, img.shape), 0, 1)
        mask = np.ones((12, 12))
        est = estimate_params(img, noisy, mask)
        sel = mask == 1.0
        for k in range(3):
            x = img[..., k][sel]
            y = noisy[..., k][sel]
            best = np.sum((est.w[k] * x + est.b[k] - y) ** 2)
            for dw in (-1e-3, 0.0, 1e-3):
                for db in (-1e-3, 0.0, 1e-3):
                    perturbed = np.sum(((est.w[k] + dw) * x + est.b[k] + db - y) ** 2)
                    assert perturbed >= best - 1e-12


class TestCompose:
    def test_alpha_zero_returns_first(self):
        rng = np.random.default_rng(20)
        a, d = rng.random((5, 5, 3)), rng.random((5, 5, 3))
        assert np.array_equal(compose(a, d, np.zeros((5, 5))), a)

    def test_alpha_one_returns_second(self):
        rng = np.random.default_rng(21)
        a, d = rng.random((5, 5, 3)), rng.random((5, 5, 3))
        assert np.array_equal(compose(a, d, np.ones((5, 5))), d)

    def test_midpoint(self):
        a = np.full((3, 3, 3), 0.8)
        d = np.full((3, 3, 3), 0.4)
        np.testing.assert_allclose(compose(a, d, np.full((3, 3), 0.5)), 0.6, atol=1e-15)

    def test_convex_envelope(self):
        rng = np.random.default_rng(22)
        for _ in range(20):
            a, d = rng.random((6, 6, 3)), rng.random((6, 6, 3))
            matte = rng.random((6, 6))
            out = compose(a, d, matte)
            assert (out >= np.minimum(a, d)).all()
            assert (out <= np.maximum(a, d)).all()

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            compose(np.zeros((3, 3, 3)), np.zeros((3, 3, 3)), np.zeros((2, 2)))


class TestSynthesizeMatte:
    def test_radius_zero_is_the_mask(self):
        rng = np.random.default_rng(30)
        mask = (rng.random((7, 7)) < 0.5).astype(float)
        assert np.array_equal(synthesize_matte(mask, 0), mask)

    def test_all_ones_stays_all_ones(self):
        for radius in (1, 3, 5):
            assert np.array_equal(synthesize_matte(np.ones((6, 6)), radius),
                                  np.ones((6, 6)))

    def test_single_pixel_footprint(self):
        # One 3-tap box pass of a centered impulse spreads 1/9 over a
        # 3x3 footprint.
        mask = np.zeros((5, 5))
        mask[2, 2] = 1.0
        out = synthesize_matte(mask, 1)
        expected = np.zeros((5, 5))
        expected[1:4, 1:4] = 1.0 / 9.0
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_interior_farther_than_radius_stays_one(self):
        mask = np.zeros((11, 11))
        mask[2:9, 2:9] = 1.0
        out = synthesize_matte(mask, 2)
        assert np.array_equal(out[4:7, 4:7], np.ones((3, 3)))
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_negative_radius_rejected(self):
        with pytest.raises(ValueError):
            synthesize_matte(np.ones((3, 3)), -1)


class TestFillShadow:
    def test_identity_params_any_matte(self):
        rng = np.random.default_rng(40)
        img = rng.random((6, 6, 3))
        matte = rng.random((6, 6))
        assert np.array_equal(fill_shadow(img, ShadowParams.identity(), matte), img)

    def test_full_matte_matches_darken(self):
        img = np.full((4, 4, 3), 0.8)
        params = ShadowParams(np.full(3, 0.5), np.full(3, 0.1))
        np.testing.assert_allclose(fill_shadow(img, params, np.ones((4, 4))),
                                   0.5, atol=1e-15)

    def test_umbra_round_trip_recovers_params(self):
        rng = np.random.default_rng(41)
        img, params, mask = random_fixture(rng)
        filled = fill_shadow(img, params, mask)
        est = estimate_params(img, filled, mask)
        np.testing.assert_allclose(est.w, params.w, atol=1e-10)
        np.testing.assert_allclose(est.b, params.b, atol=1e-10)
        sel = mask == 1.0
        for k in range(3):
            w_oracle, b_oracle = ols_oracle(img[..., k][sel], filled[..., k][sel])
            assert est.w[k] == pytest.approx(w_oracle, abs=1e-9)


class TestComposeGradients:
    def test_alpha_zero_zeroes_param_gradients(self):
        rng = np.random.default_rng(50)
        img = rng.uniform(0.2, 0.8, (5, 5, 3))
        params = ShadowParams(np.full(3, 0.7), np.full(3, 0.05))
        grads = compose_gradients(img, params, np.zeros((5, 5)))
        assert np.array_equal(grads.d_w, np.zeros((5, 5, 3)))
        assert np.array_equal(grads.d_b, np.zeros((5, 5, 3)))

    def test_equal_images_zero_alpha_gradient(self):
        rng = np.random.default_rng(51)
        img = rng.uniform(0.2, 0.8, (5, 5, 3))
        grads = compose_gradients(img, ShadowParams.identity(), rng.random((5, 5)))
        np.testing.assert_allclose(grads.d_alpha, 0.0, atol=1e-15)

    def test_clamping_rejected(self):
        img = np.full((3, 3, 3), 0.9)
        params = ShadowParams(np.full(3, 1.5), np.zeros(3))
        with pytest.raises(ValueError, match="clamping"):
            compose_gradients(img, params, np.zeros((3, 3)))

    def test_matches_central_finite_differences(self):
        rng = np.random.default_rng(52)
        step = 1e-5
        for _ in range(10):
            img = rng.uniform(0.2, 0.8, (6, 6, 3))
            params = ShadowParams(rng.uniform(0.3, 0.9, 3), rng.uniform(0.01, 0.08, 3))
            matte = rng.random((6, 6))
            grads = compose_gradients(img, params, matte)

            for k in range(3):
                for attr in ("d_w", "d_b"):
                    bump = np.zeros(3)
                    bump[k] = step
                    if attr == "d_w":
                        plus = ShadowParams(params.w + bump, params.b)
                        minus = ShadowParams(params.w - bump, params.b)
                    else:
                        plus = ShadowParams(params.w, params.b + bump)
                        minus = ShadowParams(params.w, params.b - bump)
                    numeric = (fill_shadow(img, plus, matte)
                               - fill_shadow(img, minus, matte)) / (2 * step)
                    analytic = np.zeros_like(numeric)
                    analytic[..., k] = getattr(grads, attr)[..., k]
                    denom = max(np.abs(numeric).max(), 1e-12)
                    assert np.abs(analytic - numeric).max() / denom < 1e-6

            darkened = img * params.w + params.b
            plus = compose(img, darkened, np.clip(matte + step, 0, 1))
            minus = compose(img, darkened, np.clip(matte - step, 0, 1))
            inner = (matte > step) & (matte < 1 - step)
            numeric = (plus - minus)[inner] / (2 * step)
            analytic = grads.d_alpha[inner]
            denom = max(np.abs(numeric).max(), 1e-12)
            assert np.abs(analytic - numeric).max() / denom < 1e-6
