"""Cross-attention integration kernel with forward-mode derivatives.

Foreground features query background features for illumination cues:
two spectrally normalized 1x1 projections produce an N x N affinity
map (N = H * W) via row-wise softmax of dot-product scores; the
affinity mixes a third projection of the background, a fourth 1x1
convolution maps the mixture to its output width, and the result is
concatenated with the foreground features along channels.

The JVP (jacobian-vector product) is the exact forward-mode derivative
of that pipeline, including the softmax jacobian; ``grad_check_report``
verifies it against central finite differences.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

__all__ = [
    "CaiWeights",
    "GradCheckReport",
    "conv1x1",
    "spectral_normalize",
    "row_softmax",
    "affinity",
    "cai_forward",
    "cai_jvp",
    "grad_check_report",
    "save_weights",
    "load_weights",
]

PROJECTION_DIVISOR = 8
SIGMA_FLOOR = 1e-12
GRAD_CHECK_THRESHOLD = 1e-4
WEIGHTS_FORMAT = "shadowcomp-cai-weights"
WEIGHTS_VERSION = 1

_ARRAY_FIELDS = ("f_kernel", "g_kernel", "h_kernel", "v_kernel", "h_bias", "v_bias")


@dataclass(frozen=True, eq=False)
class CaiWeights:
    """Projection kernels of the attention layer.

    f and g project background and foreground to the score space
    (C -> C/8, no bias, spectrally normalized); h projects the
    background values (C -> C/8, with bias); v maps the attended
    values to the output width (C/8 -> C_out, with bias).
    """

    f_kernel: np.ndarray
    g_kernel: np.ndarray
    h_kernel: np.ndarray
    v_kernel: np.ndarray
    h_bias: np.ndarray
    v_bias: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        for name in _ARRAY_FIELDS:
            object.__setattr__(self, name,
                               np.asarray(getattr(self, name), dtype=np.float64))
        c, c8 = self.f_kernel.shape
        if c % PROJECTION_DIVISOR != 0 or c8 != c // PROJECTION_DIVISOR:
            raise ValueError(f"f_kernel must map C -> C/{PROJECTION_DIVISOR}, "
                             f"got {self.f_kernel.shape}")
        if self.g_kernel.shape != (c, c8) or self.h_kernel.shape != (c, c8):
            raise ValueError("f, g, h kernels must share the shape (C, C/8)")
        if self.v_kernel.ndim != 2 or self.v_kernel.shape[0] != c8:
            raise ValueError(f"v_kernel must map C/8 -> C_out, got {self.v_kernel.shape}")
        if self.h_bias.shape != (c8,) or self.v_bias.shape != (self.v_kernel.shape[1],):
            raise ValueError("bias shapes must match their kernels' output widths")

    @property
    def channels(self) -> int:
        return self.f_kernel.shape[0]

    @property
    def proj_channels(self) -> int:
        return self.f_kernel.shape[1]

    @property
    def out_channels(self) -> int:
        return self.v_kernel.shape[1]

    @classmethod
    def random(cls, channels: int, out_channels: Optional[int] = None,
               seed: int = 0, sn_iters: int = 100) -> "CaiWeights":
        """Draw Gaussian kernels, spectrally normalizing f and g.

        The output width defaults to the input width so the
        concatenated feature map doubles the channel count.
        """
        if channels % PROJECTION_DIVISOR != 0:
            raise ValueError(f"channels must be divisible by {PROJECTION_DIVISOR}")
        if out_channels is None:
            out_channels = channels
        proj = channels // PROJECTION_DIVISOR
        rng = np.random.default_rng(seed)
        scale = 1.0 / np.sqrt(channels)
        f = spectral_normalize(rng.standard_normal((channels, proj)), sn_iters, seed)
        g = spectral_normalize(rng.standard_normal((channels, proj)), sn_iters, seed + 1)
        h = rng.standard_normal((channels, proj)) * scale
        v = rng.standard_normal((proj, out_channels)) / np.sqrt(proj)
        h_bias = rng.standard_normal(proj) * 0.01
        v_bias = rng.standard_normal(out_channels) * 0.01
        return cls(f, g, h, v, h_bias, v_bias, seed=seed)


@dataclass(frozen=True)
class GradCheckReport:
    """Outcome of randomized JVP vs finite-difference trials."""

    height: int
    width: int
    channels: int
    trials: int
    step: float
    threshold: float
    errors: tuple
    max_rel_error: float
    passed: bool

    def to_json(self) -> dict:
        return {"height": self.height, "width": self.width,
                "channels": self.channels, "trials": self.trials,
                "step": self.step, "threshold": self.threshold,
                "errors": list(self.errors),
                "max_rel_error": self.max_rel_error, "pass": self.passed}


def _as_feature_map(x: np.ndarray, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError(f"{name} must have shape (H, W, C), got {x.shape}")
    if not np.isfinite(x).all():
        raise ValueError(f"{name} contains non-finite values")
    return x


def conv1x1(x: np.ndarray, kernel: np.ndarray,
            bias: Optional[np.ndarray] = None) -> np.ndarray:
    """Per-position linear map: out(i) = kernel^T x(i) (+ bias)."""
    x = _as_feature_map(x, "input")
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 2 or kernel.shape[0] != x.shape[2]:
        raise ValueError(f"kernel shape {kernel.shape} does not accept "
                         f"{x.shape[2]} input channels")
    out = np.tensordot(x, kernel, axes=([2], [0]))
    if bias is not None:
        out = out + np.asarray(bias, dtype=np.float64)
    return out


def spectral_normalize(kernel: np.ndarray, power_iters: int, seed: int = 0) -> np.ndarray:
    """Divide a matrix by its power-iteration top-singular-value estimate."""
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 2:
        raise ValueError(f"kernel must be a matrix, got shape {kernel.shape}")
    if power_iters < 1:
        raise ValueError("power_iters must be >= 1")
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(kernel.shape[0])
    u = u / max(np.linalg.norm(u), SIGMA_FLOOR)
    v = np.zeros(kernel.shape[1])
    for _ in range(power_iters):
        v = kernel.T @ u
        v = v / max(np.linalg.norm(v), SIGMA_FLOOR)
        u = kernel @ v
        u = u / max(np.linalg.norm(u), SIGMA_FLOOR)
    sigma = float(u @ kernel @ v)
    return kernel / max(sigma, SIGMA_FLOOR)


def row_softmax(scores: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the last axis (key positions)."""
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _projections(x_f: np.ndarray, x_b: np.ndarray, w: CaiWeights):
    x_f = _as_feature_map(x_f, "foreground features")
    x_b = _as_feature_map(x_b, "background features")
    if x_f.shape != x_b.shape:
        raise ValueError(f"feature shapes differ: {x_f.shape} vs {x_b.shape}")
    if x_f.shape[2] != w.channels:
        raise ValueError(f"weights expect {w.channels} channels, got {x_f.shape[2]}")
    n = x_f.shape[0] * x_f.shape[1]
    queries = conv1x1(x_f, w.g_kernel).reshape(n, w.proj_channels)
    keys = conv1x1(x_b, w.f_kernel).reshape(n, w.proj_channels)
    values = conv1x1(x_b, w.h_kernel, w.h_bias).reshape(n, w.proj_channels)
    return x_f, x_b, queries, keys, values


def affinity(x_f: np.ndarray, x_b: np.ndarray, w: CaiWeights) -> np.ndarray:
    """N x N attention map; row i is a distribution over background positions."""
    _, _, queries, keys, _ = _projections(x_f, x_b, w)
    return row_softmax(queries @ keys.T)


def cai_forward(x_f: np.ndarray, x_b: np.ndarray, w: CaiWeights):
    """Attended background features and their concatenation with x_f.

    Returns ``(attended, concatenated)`` where attended has shape
    (H, W, C_out) and concatenated stacks [attended, x_f] along
    channels.
    """
    x_f, x_b, queries, keys, values = _projections(x_f, x_b, w)
    h, width = x_f.shape[:2]
    att = row_softmax(queries @ keys.T) @ values
    attended = conv1x1(att.reshape(h, width, w.proj_channels), w.v_kernel, w.v_bias)
    concatenated = np.concatenate([attended, x_f], axis=2)
    return attended, concatenated


def cai_jvp(x_f: np.ndarray, x_b: np.ndarray, w: CaiWeights,
            dx_f: np.ndarray, dx_b: np.ndarray) -> np.ndarray:
    """Directional derivative of the concatenated output along (dx_f, dx_b).

    Uses the softmax jacobian dA = A * (dS - rowsum(dS * A)) applied to
    the score tangent dS, then propagates through the value mixing and
    the output projection.
    """
    x_f, x_b, queries, keys, values = _projections(x_f, x_b, w)
    dx_f = _as_feature_map(dx_f, "foreground tangent")
    dx_b = _as_feature_map(dx_b, "background tangent")
    if dx_f.shape != x_f.shape or dx_b.shape != x_b.shape:
        raise ValueError("tangent shapes must match the feature maps")
    h, width = x_f.shape[:2]
    n = h * width

    attn = row_softmax(queries @ keys.T)
    d_queries = conv1x1(dx_f, w.g_kernel).reshape(n, w.proj_channels)
    d_keys = conv1x1(dx_b, w.f_kernel).reshape(n, w.proj_channels)
    d_values = conv1x1(dx_b, w.h_kernel).reshape(n, w.proj_channels)

    d_scores = d_queries @ keys.T + queries @ d_keys.T
    d_attn = attn * (d_scores - (d_scores * attn).sum(axis=1, keepdims=True))
    d_mixed = d_attn @ values + attn @ d_values
    d_attended = conv1x1(d_mixed.reshape(h, width, w.proj_channels), w.v_kernel)
    return np.concatenate([d_attended, dx_f], axis=2)


def grad_check_report(height: int = 2, width: int = 2, channels: int = 8,
                      trials: int = 10, seed: int = 0, step: float = 1e-5,
                      threshold: float = GRAD_CHECK_THRESHOLD,
                      jvp_fn: Optional[Callable] = None) -> GradCheckReport:
    """Randomized comparison of the analytic JVP with central differences.

    Each trial draws fresh weights, feature maps, and tangents,
    evaluates ``(F(x + step*d) - F(x - step*d)) / (2*step)`` on the
    concatenated output, and records the worst elementwise deviation
    normalized by the larger of the two derivative magnitudes. The
    report passes when the maximum over trials stays below the
    threshold.
    """
    if height * width > 64 or channels > 64:
        raise ValueError("grad check dimensions too large for O(N^2) differencing")
    if jvp_fn is None:
        jvp_fn = cai_jvp
    rng = np.random.default_rng(seed)
    errors = []
    for trial in range(trials):
        weights = CaiWeights.random(channels, seed=seed * 1000 + trial)
        x_f = rng.standard_normal((height, width, channels))
        x_b = rng.standard_normal((height, width, channels))
        dx_f = rng.standard_normal((height, width, channels))
        dx_b = rng.standard_normal((height, width, channels))

        analytic = jvp_fn(x_f, x_b, weights, dx_f, dx_b)
        _, plus = cai_forward(x_f + step * dx_f, x_b + step * dx_b, weights)
        _, minus = cai_forward(x_f - step * dx_f, x_b - step * dx_b, weights)
        numeric = (plus - minus) / (2.0 * step)

        denom = max(np.abs(numeric).max(), np.abs(analytic).max(), SIGMA_FLOOR)
        errors.append(float(np.abs(analytic - numeric).max() / denom))
    max_err = max(errors)
    return GradCheckReport(height=height, width=width, channels=channels,
                           trials=trials, step=step, threshold=threshold,
                           errors=tuple(errors), max_rel_error=max_err,
                           passed=max_err < threshold)


def save_weights(weights: CaiWeights, path) -> None:
    """Serialize weights: one JSON header line, then raw little-endian float64."""
    header = {
        "format": WEIGHTS_FORMAT,
        "version": WEIGHTS_VERSION,
        "channels": weights.channels,
        "out_channels": weights.out_channels,
        "seed": weights.seed,
        "arrays": [[name, list(getattr(weights, name).shape)] for name in _ARRAY_FIELDS],
    }
    with open(Path(path), "wb") as handle:
        handle.write(json.dumps(header).encode("utf-8") + b"\n")
        for name in _ARRAY_FIELDS:
            handle.write(np.ascontiguousarray(getattr(weights, name),
                                              dtype="<f8").tobytes())


def load_weights(path) -> CaiWeights:
    """Inverse of :func:`save_weights`."""
    with open(Path(path), "rb") as handle:
        header = json.loads(handle.readline().decode("utf-8"))
        if header.get("format") != WEIGHTS_FORMAT:
            raise ValueError(f"{path}: not a CAI weights file")
        if header.get("version") != WEIGHTS_VERSION:
            raise ValueError(f"{path}: unsupported weights version {header.get('version')}")
        blob = handle.read()
    arrays = {}
    offset = 0
    for name, shape in header["arrays"]:
        count = int(np.prod(shape))
        arrays[name] = np.frombuffer(blob, dtype="<f8", count=count,
                                     offset=offset).reshape(shape).astype(np.float64)
        offset += count * 8
    return CaiWeights(seed=header.get("seed"), **arrays)
