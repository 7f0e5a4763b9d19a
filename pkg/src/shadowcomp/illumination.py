"""Affine shadow illumination model.

A shadow darkens each color channel by a per-channel affine map
``dark = w[k] * lit + b[k]``. The inverse map relights. Given a
composite image (no foreground shadow), a shadowed target, and the
shadow-area mask, the coefficients are recovered channel by channel
with ordinary least squares. A soft matte blends the darkened image
into the original to produce the shadowed result:

    out = image * (1 - alpha) + darkened * alpha

All functions are pure; regression accumulators run in a fixed
(row-major) order per channel so results are bit-deterministic under
any caller-side parallelism.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imaging import as_image, as_mask, as_matte

__all__ = [
    "ShadowParams",
    "CompositionGradients",
    "darken",
    "invert",
    "estimate_params",
    "compose",
    "synthesize_matte",
    "fill_shadow",
    "compose_gradients",
]

# Below this in-mask variance the channel regression is ill-conditioned
# and falls back to a pure offset fit (w = 1).
DEGENERATE_VARIANCE = 1e-12


@dataclass(frozen=True, eq=False)
class ShadowParams:
    """Per-channel affine darkening coefficients: multiplier w, offset b."""

    w: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64).reshape(3)
        b = np.asarray(self.b, dtype=np.float64).reshape(3)
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise ValueError("shadow parameters must be finite")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", b)

    @classmethod
    def identity(cls) -> "ShadowParams":
        return cls(np.ones(3), np.zeros(3))

    @property
    def invertible(self) -> bool:
        return bool((self.w != 0.0).all())

    def to_json(self) -> dict:
        """JSON form {"w": [r, g, b], "b": [r, g, b]} at full double precision."""
        return {"w": [float(v) for v in self.w], "b": [float(v) for v in self.b]}

    @classmethod
    def from_json(cls, obj: dict) -> "ShadowParams":
        return cls(np.asarray(obj["w"], dtype=np.float64),
                   np.asarray(obj["b"], dtype=np.float64))


@dataclass(frozen=True)
class CompositionGradients:
    """Analytic partials of the filled image, each shaped (H, W, 3).

    d_w[y, x, k] is the derivative with respect to w[k] at that pixel,
    d_b likewise for b[k], and d_alpha[y, x, :] is the derivative of
    the three output channels with respect to the matte value alpha(y, x).
    """

    d_w: np.ndarray
    d_b: np.ndarray
    d_alpha: np.ndarray


def darken(img: np.ndarray, params: ShadowParams) -> np.ndarray:
    """Apply the per-channel affine darkening, clamped into [0, 1]."""
    img = as_image(img)
    return np.clip(img * params.w + params.b, 0.0, 1.0)


def invert(params: ShadowParams) -> ShadowParams:
    """Inverse affine map (relighting): w' = 1/w, b' = -b/w."""
    if not params.invertible:
        raise ValueError("shadow parameters are not invertible: some w component is 0")
    w_inv = 1.0 / params.w
    return ShadowParams(w_inv, -params.b * w_inv)


def estimate_params(composite: np.ndarray, target: np.ndarray,
                    shadow_mask: np.ndarray) -> ShadowParams:
    """Recover darkening coefficients by per-channel least squares.

    For each channel, (w, b) minimizes the squared error of
    w * composite + b against target over the masked pixels. Channels
    whose masked composite values have variance below
    ``DEGENERATE_VARIANCE`` fall back to w = 1 with b equal to the mean
    masked difference, which keeps the map invertible.
    """
    composite = as_image(composite)
    target = as_image(target)
    shadow_mask = as_mask(shadow_mask)
    if composite.shape != target.shape or composite.shape[:2] != shadow_mask.shape:
        raise ValueError("composite, target, and mask dimensions must agree")
    sel = shadow_mask == 1.0
    n = int(sel.sum())
    if n < 2:
        raise ValueError(f"shadow mask must select at least 2 pixels, got {n}")

    w = np.empty(3)
    b = np.empty(3)
    for k in range(3):
        x = composite[..., k][sel]
        y = target[..., k][sel]
        x_mean = x.mean()
        variance = np.mean((x - x_mean) ** 2)
        if variance < DEGENERATE_VARIANCE:
            w[k] = 1.0
            b[k] = np.mean(y - x)
        else:
            y_mean = y.mean()
            covariance = np.mean((x - x_mean) * (y - y_mean))
            w[k] = covariance / variance
            b[k] = y_mean - w[k] * x_mean
    return ShadowParams(w, b)


def compose(image: np.ndarray, darkened: np.ndarray, matte: np.ndarray) -> np.ndarray:
    """Blend: image * (1 - alpha) + darkened * alpha, alpha broadcast over channels."""
    image = as_image(image)
    darkened = as_image(darkened)
    matte = as_matte(matte)
    if image.shape != darkened.shape or image.shape[:2] != matte.shape:
        raise ValueError("image, darkened, and matte dimensions must agree")
    alpha = matte[..., None]
    out = image * (1.0 - alpha) + darkened * alpha
    # Guard the convex-envelope invariant against floating-point rounding.
    return np.clip(out, np.minimum(image, darkened), np.maximum(image, darkened))


def _box_blur_pass(field: np.ndarray) -> np.ndarray:
    """One separable 3-tap box pass with edge-replicate padding."""
    out = field
    for axis in (0, 1):
        padded = np.pad(out, [(1, 1) if a == axis else (0, 0) for a in range(out.ndim)],
                        mode="edge")
        lo = np.take(padded, range(0, out.shape[axis]), axis=axis)
        mid = np.take(padded, range(1, out.shape[axis] + 1), axis=axis)
        hi = np.take(padded, range(2, out.shape[axis] + 2), axis=axis)
        out = (lo + mid + hi) / 3.0
    return out


def synthesize_matte(shadow_mask: np.ndarray, penumbra_radius: int) -> np.ndarray:
    """Soft matte from a binary mask: the mask box-blurred ``radius`` times.

    Radius 0 returns the mask itself. Each pass is a separable 3-tap
    box filter, so pixels farther than the radius from the mask
    boundary keep the value 1 (the umbra) while a soft penumbra band
    forms around the edge.
    """
    matte = as_mask(shadow_mask).copy()
    if penumbra_radius < 0:
        raise ValueError(f"penumbra radius must be >= 0, got {penumbra_radius}")
    for _ in range(penumbra_radius):
        matte = _box_blur_pass(matte)
    return np.clip(matte, 0.0, 1.0)


def fill_shadow(image: np.ndarray, params: ShadowParams, matte: np.ndarray) -> np.ndarray:
    """Shadow the image: blend its darkened version in through the matte."""
    return compose(image, darken(image, params), matte)


def compose_gradients(image: np.ndarray, params: ShadowParams,
                      matte: np.ndarray) -> CompositionGradients:
    """Analytic partials of ``fill_shadow`` with respect to w, b, and alpha.

    Only valid where the darkening does not clamp: every pre-clamp
    darkened value must lie strictly inside (0, 1), otherwise the fill
    is not differentiable there and this raises.
    """
    image = as_image(image)
    matte = as_matte(matte)
    if image.shape[:2] != matte.shape:
        raise ValueError("image and matte dimensions must agree")
    raw = image * params.w + params.b
    if raw.min() <= 0.0 or raw.max() >= 1.0:
        raise ValueError("clamping active: darkened values reach [0, 1] boundary, "
                         "gradients are undefined there")
    alpha = matte[..., None]
    d_w = alpha * image
    d_b = np.broadcast_to(alpha, image.shape).copy()
    d_alpha = raw - image
    return CompositionGradients(d_w=d_w, d_b=d_b, d_alpha=d_alpha)
