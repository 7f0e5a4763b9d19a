"""Evaluation metrics: RMSE and SSIM, global and shadow-local.

RMSE is reported on the 0-255 intensity scale: the root of the mean
squared byte-scale difference over every included pixel and channel.
SSIM uses the standard 11x11 Gaussian window (sigma 1.5, K1 0.01,
K2 0.03) on dynamic range 1.0, computed per channel and averaged into
a per-pixel map; the global score is the map mean, the local score the
map mean over masked pixels. Windowing pads symmetrically, so edits
farther than the window radius from every masked pixel cannot change
the local score.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import correlate1d

from .imaging import as_image, as_mask, load_image

__all__ = [
    "MetricReport",
    "AggregateReport",
    "SampleResult",
    "SetReport",
    "RatioBins",
    "DEFAULT_RATIO_EDGES",
    "SSIM_WINDOW",
    "SSIM_SIGMA",
    "rmse",
    "ssim",
    "ssim_map",
    "evaluate_pair",
    "evaluate_set",
    "aggregate_reports",
    "bin_by_shadow_ratio",
]

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_RANGE = 1.0

# Shadow-area ratio bin edges: (0, 0.02], (0.02, 0.04], (0.04, 0.08], (0.08, 1].
DEFAULT_RATIO_EDGES = (0.0, 0.02, 0.04, 0.08, 1.0)


@dataclass(frozen=True)
class MetricReport:
    """Per-pair scores: global/local RMSE and SSIM plus local pixel count."""

    grmse: float
    lrmse: float
    gssim: float
    lssim: float
    n_pixels_local: int

    def to_json(self) -> dict:
        return {"grmse": self.grmse, "lrmse": self.lrmse,
                "gssim": self.gssim, "lssim": self.lssim,
                "n_pixels_local": self.n_pixels_local}


@dataclass(frozen=True)
class AggregateReport:
    """Unweighted mean of per-sample reports."""

    grmse: float
    lrmse: float
    gssim: float
    lssim: float
    n_samples: int

    def to_json(self) -> dict:
        return {"grmse": self.grmse, "lrmse": self.lrmse,
                "gssim": self.gssim, "lssim": self.lssim,
                "n_samples": self.n_samples}


@dataclass(frozen=True)
class SampleResult:
    sample_id: str
    split: str
    ratio: float
    report: MetricReport

    def to_json(self) -> dict:
        return {"id": self.sample_id, "split": self.split, "ratio": self.ratio,
                **self.report.to_json()}


@dataclass(frozen=True)
class SetReport:
    """Evaluation over a manifest: per sample, per split, and overall."""

    per_sample: tuple
    splits: dict
    overall: Optional[AggregateReport]

    def to_json(self) -> dict:
        return {
            "overall": self.overall.to_json() if self.overall else None,
            "splits": {name: (agg.to_json() if agg else None)
                       for name, agg in self.splits.items()},
            "per_sample": [s.to_json() for s in self.per_sample],
        }


@dataclass(frozen=True)
class RatioBins:
    """Samples histogrammed by shadow-area ratio with per-bin aggregates."""

    edges: tuple
    counts: tuple
    per_bin_reports: tuple

    def to_json(self) -> dict:
        bins = []
        for i, (count, agg) in enumerate(zip(self.counts, self.per_bin_reports)):
            bins.append({"lower": self.edges[i], "upper": self.edges[i + 1],
                         "count": count,
                         "report": agg.to_json() if agg else None})
        return {"edges": list(self.edges), "bins": bins}


def rmse(a: np.ndarray, b: np.ndarray, mask: Optional[np.ndarray] = None) -> float:
    """Root mean squared difference on the 0-255 scale, optionally masked."""
    a = as_image(a)
    b = as_image(b)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    diff = (a - b) * 255.0
    if mask is None:
        return float(np.sqrt(np.mean(diff * diff)))
    mask = as_mask(mask)
    if mask.shape != a.shape[:2]:
        raise ValueError("mask dimensions must match the images")
    sel = mask == 1.0
    if not sel.any():
        raise ValueError("mask selects no pixels")
    return float(np.sqrt(np.mean(diff[sel] ** 2)))


def _gaussian_window1d() -> np.ndarray:
    half = (SSIM_WINDOW - 1) / 2.0
    x = np.arange(SSIM_WINDOW) - half
    kernel = np.exp(-(x ** 2) / (2.0 * SSIM_SIGMA ** 2))
    return kernel / kernel.sum()


def _window_filter(field: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    out = correlate1d(field, kernel, axis=0, mode="reflect")
    return correlate1d(out, kernel, axis=1, mode="reflect")


def ssim_map(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Channel-averaged SSIM map of shape (H, W)."""
    a = as_image(a)
    b = as_image(b)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise ValueError(f"images must be at least {SSIM_WINDOW} pixels per side")
    kernel = _gaussian_window1d()
    c1 = (SSIM_K1 * SSIM_RANGE) ** 2
    c2 = (SSIM_K2 * SSIM_RANGE) ** 2
    channel_maps = []
    for k in range(3):
        x = a[..., k]
        y = b[..., k]
        mu_x = _window_filter(x, kernel)
        mu_y = _window_filter(y, kernel)
        var_x = _window_filter(x * x, kernel) - mu_x * mu_x
        var_y = _window_filter(y * y, kernel) - mu_y * mu_y
        cov = _window_filter(x * y, kernel) - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
        den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
        channel_maps.append(num / den)
    return np.mean(channel_maps, axis=0)


def ssim(a: np.ndarray, b: np.ndarray, mask: Optional[np.ndarray] = None) -> float:
    """Mean SSIM over all pixels, or over masked pixels when a mask is given."""
    smap = ssim_map(a, b)
    if mask is None:
        return float(smap.mean())
    mask = as_mask(mask)
    if mask.shape != smap.shape:
        raise ValueError("mask dimensions must match the images")
    sel = mask == 1.0
    if not sel.any():
        raise ValueError("mask selects no pixels")
    return float(smap[sel].mean())


def evaluate_pair(generated: np.ndarray, target: np.ndarray,
                  shadow_mask: np.ndarray) -> MetricReport:
    """Global and shadow-local RMSE/SSIM of a generated image against its target."""
    shadow_mask = as_mask(shadow_mask)
    smap = ssim_map(generated, target)
    sel = shadow_mask == 1.0
    if not sel.any():
        raise ValueError("shadow mask selects no pixels")
    return MetricReport(
        grmse=rmse(generated, target),
        lrmse=rmse(generated, target, shadow_mask),
        gssim=float(smap.mean()),
        lssim=float(smap[sel].mean()),
        n_pixels_local=int(sel.sum()),
    )


def aggregate_reports(reports: Sequence[MetricReport]) -> Optional[AggregateReport]:
    """Unweighted mean of the four metrics; None for an empty sequence."""
    if not reports:
        return None
    return AggregateReport(
        grmse=float(np.mean([r.grmse for r in reports])),
        lrmse=float(np.mean([r.lrmse for r in reports])),
        gssim=float(np.mean([r.gssim for r in reports])),
        lssim=float(np.mean([r.lssim for r in reports])),
        n_samples=len(reports),
    )


def evaluate_set(manifest_path, predictions_dir) -> SetReport:
    """Evaluate every manifest sample against its prediction image.

    Predictions are PNGs named ``<sample id>.png`` inside
    ``predictions_dir``. Samples are processed in manifest order; the
    two splits are aggregated separately and together.
    """
    from .dataset import SPLIT_BOS, SPLIT_BOS_FREE, read_manifest_entries
    from .imaging import load_mask

    predictions_dir = Path(predictions_dir)
    manifest = read_manifest_entries(manifest_path)
    results = []
    for entry in manifest.entries:
        prediction_path = predictions_dir / f"{entry.sample_id}.png"
        if not prediction_path.exists():
            raise FileNotFoundError(f"missing prediction image: {prediction_path}")
        generated = load_image(prediction_path)
        target = load_image(manifest.resolve(entry.paths["target"]))
        shadow_mask = load_mask(manifest.resolve(entry.paths["fg_shadow"]))
        report = evaluate_pair(generated, target, shadow_mask)
        results.append(SampleResult(entry.sample_id, entry.split, entry.ratio, report))

    splits = {}
    for name in (SPLIT_BOS, SPLIT_BOS_FREE):
        splits[name] = aggregate_reports([r.report for r in results if r.split == name])
    overall = aggregate_reports([r.report for r in results])
    return SetReport(per_sample=tuple(results), splits=splits, overall=overall)


def bin_by_shadow_ratio(samples: Sequence[tuple],
                        edges: Sequence[float] = DEFAULT_RATIO_EDGES) -> RatioBins:
    """Histogram (ratio, report) pairs into half-open bins (lower, upper].

    Edges must ascend; a ratio r lands in the unique bin with
    lower < r <= upper. Ratios outside the covered range raise.
    """
    edges = tuple(float(e) for e in edges)
    if len(edges) < 2 or any(edges[i] >= edges[i + 1] for i in range(len(edges) - 1)):
        raise ValueError("edges must be strictly ascending with at least two values")
    n_bins = len(edges) - 1
    members: list[list[MetricReport]] = [[] for _ in range(n_bins)]
    for ratio, report in samples:
        if not (edges[0] < ratio <= edges[-1]):
            raise ValueError(f"ratio {ratio} outside bin coverage ({edges[0]}, {edges[-1]}]")
        idx = int(np.searchsorted(edges, ratio, side="left")) - 1
        members[idx].append(report)
    return RatioBins(
        edges=edges,
        counts=tuple(len(m) for m in members),
        per_bin_reports=tuple(aggregate_reports(m) for m in members),
    )
