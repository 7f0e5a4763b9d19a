"""Paired-sample synthesis from annotated scenes.

A scene provides a ground-truth image (all shadows present), its
deshadowed counterpart, and a list of object/shadow mask pairs. A
composite sample picks a subset of pairs as the foreground and splices
the deshadowed pixels into the selected shadow areas, producing an
input image whose foreground shadow is missing while the target keeps
it. Masks of the unselected pairs merge into the background
object-shadow mask; a sample is tagged "BOS" while any such pair
remains and "BOS-free" otherwise.

Scene directories follow the layout::

    <scene_id>/
        image.png        ground-truth image
        deshadowed.png   same image with every shadow removed
        object_0.png     object mask of pair 0
        shadow_0.png     shadow mask of pair 0
        object_1.png ... consecutively numbered pairs

Samples persist as PNG assets plus a JSON-lines manifest whose first
line is a format header; asset paths are stored relative to the
manifest so a dataset directory can be relocated. Every record carries
the ground-truth darkening coefficients regressed from the pair.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .illumination import ShadowParams, estimate_params
from .imaging import (
    as_image,
    as_mask,
    load_image,
    load_mask,
    mask_area_ratio,
    mask_union,
    resize_bilinear,
    resize_mask,
    save_image,
    save_mask,
)

__all__ = [
    "SPLIT_BOS",
    "SPLIT_BOS_FREE",
    "SceneAnnotation",
    "CompositeSample",
    "ManifestEntry",
    "DatasetManifest",
    "ManifestError",
    "MissingAssetError",
    "load_scene",
    "load_scenes",
    "synthesize_composite",
    "enumerate_training_samples",
    "build_test_pairs",
    "write_manifest",
    "read_manifest_entries",
    "read_manifest",
]

SPLIT_BOS = "BOS"
SPLIT_BOS_FREE = "BOS-free"

MANIFEST_FORMAT = "shadowcomp-manifest"
MANIFEST_VERSION = 1
SCENE_LAYOUT = "image.png, deshadowed.png, object_<k>.png, shadow_<k>.png"

# Samples survive a PNG round trip with at most this per-element drift.
PNG_TOLERANCE = 2.0 / 255.0

DEFAULT_MIN_RATIO = 0.0005
DEFAULT_TARGET_SIZE = 256

_ASSET_KEYS = ("composite", "fg_object", "fg_shadow", "bos", "target")


class ManifestError(ValueError):
    """Manifest structure or sample-invariant violation."""


class MissingAssetError(ManifestError):
    """A manifest record references a file that does not exist."""


@dataclass(frozen=True, eq=False)
class SceneAnnotation:
    """A ground-truth/deshadowed image pair with object-shadow masks."""

    ground_truth: np.ndarray
    deshadowed: np.ndarray
    pairs: tuple
    scene_id: str

    def __post_init__(self):
        gt = as_image(self.ground_truth)
        de = as_image(self.deshadowed)
        if gt.shape != de.shape:
            raise ValueError(f"scene {self.scene_id}: image dimensions differ")
        pairs = tuple((as_mask(o), as_mask(s)) for o, s in self.pairs)
        if not pairs:
            raise ValueError(f"scene {self.scene_id}: needs at least one pair")
        for obj, shadow in pairs:
            if obj.shape != gt.shape[:2] or shadow.shape != gt.shape[:2]:
                raise ValueError(f"scene {self.scene_id}: mask dimensions differ "
                                 "from the images")
        object.__setattr__(self, "ground_truth", gt)
        object.__setattr__(self, "deshadowed", de)
        object.__setattr__(self, "pairs", pairs)

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    def resized(self, size: int) -> "SceneAnnotation":
        """Scene with every raster resampled to size x size."""
        return SceneAnnotation(
            ground_truth=resize_bilinear(self.ground_truth, size, size),
            deshadowed=resize_bilinear(self.deshadowed, size, size),
            pairs=tuple((resize_mask(o, size, size), resize_mask(s, size, size))
                        for o, s in self.pairs),
            scene_id=self.scene_id,
        )


@dataclass(frozen=True, eq=False)
class CompositeSample:
    """One paired training/test example synthesized from a scene."""

    composite: np.ndarray
    fg_object_mask: np.ndarray
    fg_shadow_mask: np.ndarray
    bg_objshadow_mask: np.ndarray
    target: np.ndarray
    split: str
    scene_id: str
    fg_indices: tuple

    @property
    def sample_id(self) -> str:
        return f"{self.scene_id}_fg{'-'.join(str(i) for i in self.fg_indices)}"

    @property
    def shadow_ratio(self) -> float:
        return mask_area_ratio(self.fg_shadow_mask)


@dataclass(frozen=True)
class ManifestEntry:
    """One manifest record; paths are relative to the manifest file."""

    scene_id: str
    fg_indices: tuple
    split: str
    ratio: float
    paths: dict
    shadow_params: dict

    @property
    def sample_id(self) -> str:
        name = Path(self.paths["composite"]).name
        return name[:-len("_composite.png")]

    def to_json(self) -> dict:
        return {"scene_id": self.scene_id, "fg_indices": list(self.fg_indices),
                "split": self.split, "ratio": self.ratio, "paths": dict(self.paths),
                "shadow_params": dict(self.shadow_params)}


@dataclass(frozen=True)
class DatasetManifest:
    """A parsed manifest: file location, format version, and records."""

    path: Path
    version: int
    entries: tuple

    def resolve(self, relative: str) -> Path:
        return self.path.parent / relative


def load_scene(scene_dir) -> SceneAnnotation:
    """Read one scene directory into memory."""
    scene_dir = Path(scene_dir)
    image_path = scene_dir / "image.png"
    deshadowed_path = scene_dir / "deshadowed.png"
    if not image_path.exists() or not deshadowed_path.exists():
        raise FileNotFoundError(f"{scene_dir}: scene requires {SCENE_LAYOUT}")
    pairs = []
    k = 0
    while (scene_dir / f"object_{k}.png").exists():
        shadow_path = scene_dir / f"shadow_{k}.png"
        if not shadow_path.exists():
            raise FileNotFoundError(f"{shadow_path}: object_{k}.png has no shadow mask")
        pairs.append((load_mask(scene_dir / f"object_{k}.png"), load_mask(shadow_path)))
        k += 1
    if not pairs:
        raise FileNotFoundError(f"{scene_dir}: no object_0.png found ({SCENE_LAYOUT})")
    return SceneAnnotation(ground_truth=load_image(image_path),
                           deshadowed=load_image(deshadowed_path),
                           pairs=tuple(pairs), scene_id=scene_dir.name)


def load_scenes(root) -> list:
    """Load every scene directory under root, ordered by scene id."""
    root = Path(root)
    scene_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not scene_dirs:
        raise FileNotFoundError(f"{root}: contains no scene directories")
    return [load_scene(d) for d in scene_dirs]


def synthesize_composite(scene: SceneAnnotation,
                         selected: Iterable[int]) -> CompositeSample:
    """Composite sample from the selected foreground pairs.

    The selected shadow areas take their deshadowed pixels; everything
    else keeps the ground truth, so the composite equals the target
    exactly outside the foreground shadow mask and equals the
    deshadowed source exactly inside it.
    """
    indices = tuple(sorted(set(int(i) for i in selected)))
    if not indices:
        raise ValueError("selection must be non-empty")
    if indices[0] < 0 or indices[-1] >= scene.n_pairs:
        raise IndexError(f"selection {indices} out of range for "
                         f"{scene.n_pairs} pairs")
    shadow = mask_union([scene.pairs[i][1] for i in indices])
    fg_object = mask_union([scene.pairs[i][0] for i in indices])
    composite = np.where(shadow[..., None] == 1.0, scene.deshadowed,
                         scene.ground_truth)
    rest = [i for i in range(scene.n_pairs) if i not in indices]
    if rest:
        bos = mask_union([m for i in rest for m in scene.pairs[i]])
        split = SPLIT_BOS
    else:
        bos = np.zeros_like(shadow)
        split = SPLIT_BOS_FREE
    return CompositeSample(composite=composite, fg_object_mask=fg_object,
                           fg_shadow_mask=shadow, bg_objshadow_mask=bos,
                           target=scene.ground_truth, split=split,
                           scene_id=scene.scene_id, fg_indices=indices)


def enumerate_training_samples(scene: SceneAnnotation, seed: int,
                               count: int) -> list:
    """Draw ``count`` samples with uniformly random non-empty pair subsets.

    Deterministic for a given seed; repeated subsets are allowed.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if scene.n_pairs > 62:
        raise ValueError("subset enumeration supports at most 62 pairs")
    rng = np.random.default_rng(seed)
    samples = []
    for _ in range(count):
        code = int(rng.integers(1, 2 ** scene.n_pairs))
        selected = [i for i in range(scene.n_pairs) if code >> i & 1]
        samples.append(synthesize_composite(scene, selected))
    return samples


def build_test_pairs(scenes: Sequence[SceneAnnotation],
                     min_ratio: float = DEFAULT_MIN_RATIO,
                     target_size: int = DEFAULT_TARGET_SIZE) -> list:
    """Single-foreground test samples, resized then ratio-filtered.

    Every scene raster is resampled to ``target_size`` square first;
    one candidate per (scene, pair) is synthesized and kept only when
    its shadow area ratio exceeds ``min_ratio``. Output order is
    (scene id, pair index).
    """
    if not 0.0 <= min_ratio < 1.0:
        raise ValueError("min_ratio must lie in [0, 1)")
    if target_size < 1:
        raise ValueError("target_size must be >= 1")
    samples = []
    for scene in sorted(scenes, key=lambda s: s.scene_id):
        resized = scene.resized(target_size)
        for i in range(resized.n_pairs):
            sample = synthesize_composite(resized, [i])
            if sample.shadow_ratio > min_ratio:
                samples.append(sample)
    return samples


def _sample_params(sample: CompositeSample) -> ShadowParams:
    # Fewer than 2 masked pixels cannot support a regression; record
    # the identity map for such degenerate samples.
    if int(sample.fg_shadow_mask.sum()) < 2:
        return ShadowParams.identity()
    return estimate_params(sample.composite, sample.target, sample.fg_shadow_mask)


def write_manifest(samples: Sequence[CompositeSample], out_dir) -> DatasetManifest:
    """Write PNG assets plus manifest.jsonl; returns the parsed manifest.

    Each sample contributes five PNGs, one params sidecar JSON, and one
    manifest line. Identical inputs produce byte-identical output
    files. Duplicate sample ids (possible when training subsets
    repeat) get a numeric suffix so every record keeps its own assets.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / "manifest.jsonl"
    header = {"format": MANIFEST_FORMAT, "version": MANIFEST_VERSION,
              "scene_layout": SCENE_LAYOUT}

    used_ids = set()
    entries = []
    with open(manifest_path, "w", encoding="utf-8") as handle:
        handle.write(json.dumps(header) + "\n")
        for sample in samples:
            sid = sample.sample_id
            if sid in used_ids:
                n = 2
                while f"{sid}.{n}" in used_ids:
                    n += 1
                sid = f"{sid}.{n}"
            used_ids.add(sid)

            save_image(sample.composite, out_dir / f"{sid}_composite.png")
            save_mask(sample.fg_object_mask, out_dir / f"{sid}_fg_object.png")
            save_mask(sample.fg_shadow_mask, out_dir / f"{sid}_fg_shadow.png")
            save_mask(sample.bg_objshadow_mask, out_dir / f"{sid}_bos.png")
            save_image(sample.target, out_dir / f"{sid}_target.png")
            params = _sample_params(sample)
            with open(out_dir / f"{sid}_params.json", "w", encoding="utf-8") as sidecar:
                json.dump(params.to_json(), sidecar)

            entry = ManifestEntry(
                scene_id=sample.scene_id,
                fg_indices=tuple(sample.fg_indices),
                split=sample.split,
                ratio=sample.shadow_ratio,
                paths={"composite": f"{sid}_composite.png",
                       "fg_object": f"{sid}_fg_object.png",
                       "fg_shadow": f"{sid}_fg_shadow.png",
                       "bos": f"{sid}_bos.png",
                       "target": f"{sid}_target.png"},
                shadow_params=params.to_json(),
            )
            handle.write(json.dumps(entry.to_json()) + "\n")
            entries.append(entry)
    return DatasetManifest(path=manifest_path, version=MANIFEST_VERSION,
                           entries=tuple(entries))


def read_manifest_entries(path) -> DatasetManifest:
    """Parse a manifest without loading any raster data."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    with open(path, "r", encoding="utf-8") as handle:
        lines = [line for line in handle.read().splitlines() if line.strip()]
    if not lines:
        raise ManifestError(f"{path}: empty file, expected a header line")
    header = json.loads(lines[0])
    if header.get("format") != MANIFEST_FORMAT:
        raise ManifestError(f"{path}: not a {MANIFEST_FORMAT} file")
    if header.get("version") != MANIFEST_VERSION:
        raise ManifestError(f"{path}: unsupported version {header.get('version')}")
    entries = []
    for line in lines[1:]:
        record = json.loads(line)
        entries.append(ManifestEntry(
            scene_id=record["scene_id"],
            fg_indices=tuple(record["fg_indices"]),
            split=record["split"],
            ratio=float(record["ratio"]),
            paths=dict(record["paths"]),
            shadow_params=dict(record["shadow_params"]),
        ))
    return DatasetManifest(path=path, version=MANIFEST_VERSION,
                           entries=tuple(entries))


def _hydrate_entry(manifest: DatasetManifest, entry: ManifestEntry) -> CompositeSample:
    rasters = {}
    for key in _ASSET_KEYS:
        asset = manifest.resolve(entry.paths[key])
        if not asset.exists():
            raise MissingAssetError(f"{entry.sample_id}: missing asset {asset}")
        rasters[key] = (load_image(asset) if key in ("composite", "target")
                        else load_mask(asset))
    return CompositeSample(
        composite=rasters["composite"],
        fg_object_mask=rasters["fg_object"],
        fg_shadow_mask=rasters["fg_shadow"],
        bg_objshadow_mask=rasters["bos"],
        target=rasters["target"],
        split=entry.split,
        scene_id=entry.scene_id,
        fg_indices=tuple(entry.fg_indices),
    )


def _validate_sample(sample: CompositeSample, sample_id: str) -> None:
    shapes = {sample.composite.shape[:2], sample.target.shape[:2],
              sample.fg_object_mask.shape, sample.fg_shadow_mask.shape,
              sample.bg_objshadow_mask.shape}
    if len(shapes) != 1:
        raise ManifestError(f"{sample_id}: raster dimensions disagree")
    outside = sample.fg_shadow_mask == 0.0
    drift = np.abs(sample.composite - sample.target)[outside]
    if drift.size and drift.max() > PNG_TOLERANCE + 1e-12:
        raise ManifestError(
            f"{sample_id}: composite differs from target outside the shadow mask "
            f"by {drift.max():.6f} (> {PNG_TOLERANCE:.6f})")
    bos_free = not sample.bg_objshadow_mask.any()
    if bos_free != (sample.split == SPLIT_BOS_FREE):
        raise ManifestError(f"{sample_id}: split tag {sample.split!r} inconsistent "
                            "with the background object-shadow mask")


def read_manifest(path) -> list:
    """Load every manifest sample, validating its invariants.

    The composite must match the target outside the shadow mask within
    the PNG quantization tolerance, and the split tag must agree with
    the emptiness of the background object-shadow mask.
    """
    manifest = read_manifest_entries(path)
    samples = []
    for entry in manifest.entries:
        sample = _hydrate_entry(manifest, entry)
        _validate_sample(sample, entry.sample_id)
        samples.append(sample)
    return samples
