"""Image and artifact serialization.

Pipeline images are float32 HxWx3 arrays in [0,1].  PNG (8-bit RGB) and PPM
P6 are the only accepted formats; label maps go to 16-bit grayscale PNG with
a JSON sidecar; attribution maps to a grayscale heatmap plus raw floats.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage
from skimage.transform import resize

from .engine import INPUT_SHAPE
from .errors import CseError

MODEL_SIZE = (INPUT_SHAPE[1], INPUT_SHAPE[2])
MIN_DIM = 8


def load_image(path) -> np.ndarray:
    """Decode a PNG/PPM file to a float32 HxWx3 array in [0,1]."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            if im.format not in ("PNG", "PPM"):
                raise CseError(f"{path}: unsupported format {im.format}; use PNG or PPM")
            arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    except CseError:
        raise
    except Exception as exc:
        raise CseError(f"{path}: cannot decode image ({exc})") from exc
    if arr.shape[0] < MIN_DIM or arr.shape[1] < MIN_DIM:
        raise CseError(f"{path}: image smaller than {MIN_DIM}x{MIN_DIM}")
    return arr


def save_image(image: np.ndarray, path) -> None:
    """Write a [0,1] float image losslessly (8-bit quantization)."""
    path = Path(path)
    if image.ndim != 3 or image.shape[2] != 3:
        raise CseError(f"expected HxWx3 image, got shape {image.shape}")
    if np.nanmin(image) < 0 or np.nanmax(image) > 1:
        raise CseError("image values must lie in [0,1]")
    data = np.rint(image * 255.0).astype(np.uint8)
    fmt = "PPM" if path.suffix.lower() in (".ppm", ".pnm") else "PNG"
    Image.fromarray(data, mode="RGB").save(path, format=fmt)


def resize_to_model(image: np.ndarray) -> np.ndarray:
    """Bilinear resample to the classifier's 64x64 input resolution."""
    if image.shape[:2] == MODEL_SIZE:
        return image.astype(np.float32)
    out = resize(image.astype(np.float64), MODEL_SIZE + (3,), order=1, mode="edge",
                 anti_aliasing=False, preserve_range=True)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def project_mask_to_original(mask: np.ndarray, original_shape) -> np.ndarray:
    """Nearest-neighbor upsample a model-resolution mask to the original image
    and dilate by one pixel, so no masked model pixel escapes the projection."""
    h, w = original_shape[:2]
    if mask.shape == (h, w):
        return mask
    up = resize(mask.astype(np.float64), (h, w), order=0, mode="edge",
                anti_aliasing=False, preserve_range=True) > 0.5
    return ndimage.binary_dilation(up, structure=np.ones((3, 3), bool))


def save_labelmap(labels: np.ndarray, path, meta: dict) -> None:
    """16-bit grayscale PNG plus a .json reproducibility sidecar."""
    path = Path(path)
    if labels.max() >= 2**16:
        raise CseError("too many regions for 16-bit label PNG")
    Image.fromarray(labels.astype(np.uint16)).save(path, format="PNG")
    sidecar = {"K": int(labels.max()) + 1, **meta}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=2))


def load_labelmap(path):
    path = Path(path)
    labels = np.asarray(Image.open(path), dtype=np.int32)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    return labels, meta


def save_attribution(values: np.ndarray, png_path, json_path=None) -> None:
    """Grayscale heatmap PNG; optionally the raw floats as JSON for fixtures."""
    data = np.rint(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="L").save(png_path, format="PNG")
    if json_path is not None:
        Path(json_path).write_text(json.dumps(
            {"shape": list(values.shape), "values": values.reshape(-1).tolist()}))
