"""Image and mask primitives: PNG I/O, resizing, and mask algebra.

Conventions shared by the whole toolkit:

* an image is a float64 array of shape (H, W, 3) with values in [0, 1];
* a mask is a float64 array of shape (H, W) with values in {0.0, 1.0};
* a matte is a float64 array of shape (H, W) with values in [0, 1].

All in-memory arithmetic is double precision; quantization to 8 bit
happens only at file boundaries. Images interchange as RGB PNGs, masks
and mattes as grayscale PNGs. A mask byte maps to 1 when strictly
greater than 127; a resampled mask is re-thresholded at 0.5 (values
>= 0.5 become 1, mirroring the byte rule). Bilinear resampling uses
half-pixel-center alignment: output sample i reads the input at
(i + 0.5) * (in_size / out_size) - 0.5, clamped to the valid range.

All functions are pure and safe to call concurrently; arrays are
treated as immutable.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image as _PILImage

__all__ = [
    "as_image",
    "as_mask",
    "as_matte",
    "load_image",
    "save_image",
    "load_mask",
    "save_mask",
    "load_matte",
    "save_matte",
    "resize_bilinear",
    "resize_mask",
    "mask_union",
    "mask_area_ratio",
]


def as_image(data) -> np.ndarray:
    """Validate and return an (H, W, 3) float64 image with values in [0, 1]."""
    img = np.asarray(data, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"image must have shape (H, W, 3), got {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"image dimensions must be >= 1, got {img.shape[:2]}")
    if not np.isfinite(img).all():
        raise ValueError("image contains non-finite values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError("image values must lie in [0, 1]")
    return img


def as_mask(data) -> np.ndarray:
    """Validate and return an (H, W) float64 mask with values in {0, 1}."""
    mask = np.asarray(data, dtype=np.float64)
    if mask.ndim != 2:
        raise ValueError(f"mask must have shape (H, W), got {mask.shape}")
    if mask.shape[0] < 1 or mask.shape[1] < 1:
        raise ValueError(f"mask dimensions must be >= 1, got {mask.shape}")
    if not np.logical_or(mask == 0.0, mask == 1.0).all():
        raise ValueError("mask values must be exactly 0 or 1")
    return mask


def as_matte(data) -> np.ndarray:
    """Validate and return an (H, W) float64 matte with values in [0, 1]."""
    matte = np.asarray(data, dtype=np.float64)
    if matte.ndim != 2:
        raise ValueError(f"matte must have shape (H, W), got {matte.shape}")
    if matte.shape[0] < 1 or matte.shape[1] < 1:
        raise ValueError(f"matte dimensions must be >= 1, got {matte.shape}")
    if not np.isfinite(matte).all():
        raise ValueError("matte contains non-finite values")
    if matte.min() < 0.0 or matte.max() > 1.0:
        raise ValueError("matte values must lie in [0, 1]")
    return matte


def load_image(path) -> np.ndarray:
    """Load an 8-bit RGB PNG as a float image, byte v mapping to v / 255."""
    with _PILImage.open(Path(path)) as handle:
        if handle.mode != "RGB":
            raise ValueError(f"{path}: expected an RGB raster, got mode {handle.mode!r}")
        raw = np.asarray(handle, dtype=np.uint8)
    return raw.astype(np.float64) / 255.0


def save_image(img: np.ndarray, path) -> None:
    """Write an image as 8-bit RGB PNG; values round to the nearest byte."""
    img = as_image(img)
    raw = np.rint(img * 255.0).astype(np.uint8)
    _PILImage.fromarray(raw, mode="RGB").save(Path(path), format="PNG")


def load_mask(path) -> np.ndarray:
    """Load an 8-bit grayscale PNG as a binary mask (byte > 127 maps to 1)."""
    with _PILImage.open(Path(path)) as handle:
        if handle.mode != "L":
            raise ValueError(f"{path}: expected a grayscale raster, got mode {handle.mode!r}")
        raw = np.asarray(handle, dtype=np.uint8)
    return (raw > 127).astype(np.float64)


def save_mask(mask: np.ndarray, path) -> None:
    """Write a binary mask as grayscale PNG with bytes 0 / 255."""
    mask = as_mask(mask)
    raw = (mask * 255.0).astype(np.uint8)
    _PILImage.fromarray(raw, mode="L").save(Path(path), format="PNG")


def load_matte(path) -> np.ndarray:
    """Load a grayscale PNG as a soft matte, byte v mapping to v / 255."""
    with _PILImage.open(Path(path)) as handle:
        if handle.mode != "L":
            raise ValueError(f"{path}: expected a grayscale raster, got mode {handle.mode!r}")
        raw = np.asarray(handle, dtype=np.uint8)
    return raw.astype(np.float64) / 255.0


def save_matte(matte: np.ndarray, path) -> None:
    """Write a soft matte as grayscale PNG; values round to the nearest byte."""
    matte = as_matte(matte)
    raw = np.rint(matte * 255.0).astype(np.uint8)
    _PILImage.fromarray(raw, mode="L").save(Path(path), format="PNG")


def _axis_samples(out_size: int, in_size: int):
    """Half-pixel-center sample positions for one axis, split for lerping."""
    scale = in_size / out_size
    centers = (np.arange(out_size) + 0.5) * scale - 0.5
    centers = np.clip(centers, 0.0, float(in_size - 1))
    lo = np.floor(centers).astype(np.intp)
    hi = np.minimum(lo + 1, in_size - 1)
    return lo, hi, centers - lo


def _lerp(a: np.ndarray, b: np.ndarray, frac: np.ndarray) -> np.ndarray:
    # a + f*(b-a) is exact for f == 0 and for a == b, which keeps the
    # identity-resize and constant-field contracts bit-exact.
    return a + frac * (b - a)


def _resample_bilinear(field: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    if out_h < 1 or out_w < 1:
        raise ValueError(f"target dimensions must be >= 1, got ({out_h}, {out_w})")
    ylo, yhi, fy = _axis_samples(out_h, field.shape[0])
    xlo, xhi, fx = _axis_samples(out_w, field.shape[1])
    if field.ndim == 3:
        fy = fy[:, None, None]
        fx = fx[None, :, None]
    else:
        fy = fy[:, None]
        fx = fx[None, :]
    top = _lerp(field[ylo][:, xlo], field[ylo][:, xhi], fx)
    bottom = _lerp(field[yhi][:, xlo], field[yhi][:, xhi], fx)
    return _lerp(top, bottom, fy)


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize an image with bilinear, half-pixel-center sampling."""
    img = as_image(img)
    return np.clip(_resample_bilinear(img, out_h, out_w), 0.0, 1.0)


def resize_mask(mask: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize a mask: bilinear resample of the 0/1 field, re-thresholded at 0.5."""
    mask = as_mask(mask)
    field = _resample_bilinear(mask, out_h, out_w)
    return (field >= 0.5).astype(np.float64)


def mask_union(masks: Sequence[np.ndarray]) -> np.ndarray:
    """Elementwise maximum of one or more equally sized masks."""
    if len(masks) == 0:
        raise ValueError("mask_union requires at least one mask")
    validated = [as_mask(m) for m in masks]
    shape = validated[0].shape
    for m in validated[1:]:
        if m.shape != shape:
            raise ValueError(f"mask dimensions differ: {shape} vs {m.shape}")
    return np.maximum.reduce(validated)


def mask_area_ratio(mask: np.ndarray) -> float:
    """Fraction of pixels set in the mask: count of ones over H * W."""
    mask = as_mask(mask)
    return float(mask.sum()) / mask.size
