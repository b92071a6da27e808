"""Synthetic planted-patch corpus.

"Unsafe" images are a smooth muted texture with a saturated square patch
planted at a random position covering 10-25% of the area; "safe" images are
the texture alone.  Every image is a pure function of (corpus seed, index),
which is the seed contract the trainer and the bench share.
"""

from __future__ import annotations

import colorsys
import json
from pathlib import Path

import numpy as np
from skimage.transform import resize

from .image_io import save_image

IMAGE_SIZE = 64
PATCH_AREA_RANGE = (0.10, 0.25)
MANIFEST_NAME = "manifest.json"


def _rng_for(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def _base_texture(rng: np.random.Generator) -> np.ndarray:
    coarse = rng.uniform(0.25, 0.75, (8, 8, 3))
    img = resize(coarse, (IMAGE_SIZE, IMAGE_SIZE, 3), order=1, mode="edge",
                 anti_aliasing=False)
    img += rng.normal(0.0, 0.015, img.shape)
    return np.clip(img, 0.0, 1.0)


def generate_image(seed: int, index: int, unsafe: bool):
    """One corpus image; returns (HxWx3 float image, patch box or None).

    The patch box is (row, col, size) in pixels.
    """
    rng = _rng_for(seed, index)
    img = _base_texture(rng)
    if not unsafe:
        return img.astype(np.float32), None
    frac = rng.uniform(*PATCH_AREA_RANGE)
    size = int(round(np.sqrt(frac * IMAGE_SIZE * IMAGE_SIZE)))
    row = int(rng.integers(0, IMAGE_SIZE - size + 1))
    col = int(rng.integers(0, IMAGE_SIZE - size + 1))
    color = np.array(colorsys.hsv_to_rgb(float(rng.uniform(0, 1)), 1.0,
                                         float(rng.uniform(0.9, 1.0))))
    patch = color[None, None, :] + rng.normal(0.0, 0.02, (size, size, 3))
    img[row:row + size, col:col + size] = np.clip(patch, 0.0, 1.0)
    return img.astype(np.float32), (row, col, size)


def patch_mask(box, shape=(IMAGE_SIZE, IMAGE_SIZE)) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    row, col, size = box
    mask[row:row + size, col:col + size] = True
    return mask


def generate_corpus(out_dir, count: int, seed: int, unsafe_fraction: float = 0.5) -> dict:
    """Write PNGs plus a manifest; returns the manifest dict."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n_unsafe = int(round(count * unsafe_fraction))
    entries = []
    for idx in range(count):
        unsafe = idx < n_unsafe
        img, box = generate_image(seed, idx, unsafe)
        name = f"{idx:04d}_{'unsafe' if unsafe else 'safe'}.png"
        save_image(img, out_dir / name)
        entries.append({"file": name, "label": int(unsafe),
                        "patch": list(box) if box else None})
    manifest = {"seed": seed, "count": count, "unsafe_fraction": unsafe_fraction,
                "image_size": IMAGE_SIZE, "entries": entries}
    (out_dir / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2))
    return manifest


def load_manifest(corpus_dir) -> dict:
    path = Path(corpus_dir) / MANIFEST_NAME
    return json.loads(path.read_text())
