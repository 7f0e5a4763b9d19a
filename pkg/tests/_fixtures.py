"""Shared synthetic-scene builders for the test suite.

Scenes are built from a known darkening map so pipelines that recover
the coefficients can be checked against the generating truth. Masks
are disjoint rectangles, one horizontal band per object-shadow pair.
"""

from pathlib import Path

import numpy as np

from shadowcomp.dataset import SceneAnnotation
from shadowcomp.illumination import ShadowParams, compose, darken
from shadowcomp.imaging import mask_union, save_image, save_mask


def quantize(img: np.ndarray) -> np.ndarray:
    """Snap values onto the 8-bit PNG grid, as a save/load round trip would."""
    return np.rint(np.asarray(img) * 255.0) / 255.0


def rect_mask(size: int, top: int, left: int, height: int, width: int) -> np.ndarray:
    mask = np.zeros((size, size))
    mask[top:top + height, left:left + width] = 1.0
    return mask


def make_scene(scene_id: str, size: int = 32, n_pairs: int = 2, seed: int = 0,
               params: ShadowParams | None = None,
               on_byte_grid: bool = False) -> tuple[SceneAnnotation, ShadowParams]:
    """Scene whose ground truth darkens the deshadowed image inside shadows.

    With ``on_byte_grid`` the deshadowed image uses even bytes and the
    coefficients are w = 0.5 with byte-aligned offsets, so every
    derived raster is exactly representable in 8-bit PNG.
    """
    rng = np.random.default_rng(seed)
    if on_byte_grid:
        deshadowed = rng.integers(30, 101, size=(size, size, 3)) * 2 / 255.0
        params = ShadowParams(np.full(3, 0.5), np.array([10, 8, 6]) / 255.0)
    else:
        deshadowed = rng.uniform(0.25, 0.9, size=(size, size, 3))
        if params is None:
            params = ShadowParams(rng.uniform(0.3, 0.8, 3), rng.uniform(0.0, 0.08, 3))

    band = size // n_pairs
    pairs = []
    for i in range(n_pairs):
        top = i * band + 1
        obj = rect_mask(size, top, 1, max(2, band // 3), size // 4)
        shadow = rect_mask(size, top, 1 + size // 3, max(2, band // 3), size // 3)
        pairs.append((obj, shadow))

    all_shadow = mask_union([s for _, s in pairs])
    ground_truth = compose(deshadowed, darken(deshadowed, params), all_shadow)
    scene = SceneAnnotation(ground_truth=ground_truth, deshadowed=deshadowed,
                            pairs=tuple(pairs), scene_id=scene_id)
    return scene, params


def write_scene_dir(scene: SceneAnnotation, root: Path) -> Path:
    """Persist a scene in the on-disk layout the synth command reads."""
    scene_dir = Path(root) / scene.scene_id
    scene_dir.mkdir(parents=True, exist_ok=True)
    save_image(scene.ground_truth, scene_dir / "image.png")
    save_image(scene.deshadowed, scene_dir / "deshadowed.png")
    for k, (obj, shadow) in enumerate(scene.pairs):
        save_mask(obj, scene_dir / f"object_{k}.png")
        save_mask(shadow, scene_dir / f"shadow_{k}.png")
    return scene_dir
