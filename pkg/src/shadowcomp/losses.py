"""Training objectives as pure functions.

Raster losses (mask, image) are means of squared differences so their
magnitude is independent of resolution; the 6-component parameter loss
is a plain sum of squares. Adversarial terms use the hinge form on raw
scalar scores; a patch score map reduces to a scalar by spatial mean.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .illumination import ShadowParams

__all__ = [
    "LossWeights",
    "mask_loss",
    "param_loss",
    "image_loss",
    "d_hinge_loss",
    "g_adv_loss",
    "generator_objective",
    "score_from_map",
]


@dataclass(frozen=True)
class LossWeights:
    """Weights for the combined generator objective."""

    lambda_s: float = 10.0
    lambda_i: float = 10.0
    lambda_p: float = 1.0
    lambda_gd: float = 0.1

    def __post_init__(self):
        for name in ("lambda_s", "lambda_i", "lambda_p", "lambda_gd"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


def _mean_squared(pred: np.ndarray, gt: np.ndarray, kind: str) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"{kind} shapes differ: {pred.shape} vs {gt.shape}")
    return float(np.mean((pred - gt) ** 2))


def mask_loss(pred_matte: np.ndarray, gt_mask: np.ndarray) -> float:
    """Mean squared difference between predicted matte and binary mask."""
    return _mean_squared(pred_matte, gt_mask, "mask")


def param_loss(pred: ShadowParams, gt: ShadowParams) -> float:
    """Sum of squared differences over the 6 affine coefficients."""
    return float(np.sum((pred.w - gt.w) ** 2) + np.sum((pred.b - gt.b) ** 2))


def image_loss(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean squared difference between predicted and ground-truth images."""
    return _mean_squared(pred, gt, "image")


def d_hinge_loss(fake_scores: Sequence[float], real_scores: Sequence[float]) -> float:
    """Hinge discriminator loss: E[max(0, 1 + fake)] + E[max(0, 1 - real)]."""
    fake = np.asarray(fake_scores, dtype=np.float64)
    real = np.asarray(real_scores, dtype=np.float64)
    if fake.size == 0 or real.size == 0:
        raise ValueError("score sets must be non-empty")
    return float(np.mean(np.maximum(0.0, 1.0 + fake)) +
                 np.mean(np.maximum(0.0, 1.0 - real)))


def g_adv_loss(fake_scores: Sequence[float]) -> float:
    """Generator adversarial loss: negative mean of fake scores."""
    fake = np.asarray(fake_scores, dtype=np.float64)
    if fake.size == 0:
        raise ValueError("score set must be non-empty")
    return float(-np.mean(fake))


def generator_objective(l_s: float, l_i: float, l_p: float, l_gd: float,
                        weights: LossWeights = LossWeights()) -> float:
    """Weighted generator objective over the four component losses."""
    return (weights.lambda_s * l_s + weights.lambda_i * l_i
            + weights.lambda_p * l_p + weights.lambda_gd * l_gd)


def score_from_map(score_map: np.ndarray) -> float:
    """Reduce a patch discriminator score map to a scalar by spatial mean."""
    return float(np.mean(np.asarray(score_map, dtype=np.float64)))
