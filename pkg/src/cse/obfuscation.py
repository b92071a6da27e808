"""Masking operators applied to region pixel sets.

Every operator leaves pixels outside the region set bit-identical; fill
operators are idempotent.  Blur and pixelate are computed on the whole
clean image and composited inside the mask, so masking a union of regions
never compounds on already-masked pixels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import CseError, ShapeMismatchError

KINDS = ("fill-channel-means", "fill-constant", "gaussian-blur", "pixelate")


@dataclass
class MaskOp:
    kind: str
    rgb: tuple = (0.0, 0.0, 0.0)   # fill-constant
    sigma: float = 4.0             # gaussian-blur
    block: int = 8                 # pixelate

    def __post_init__(self):
        if self.kind not in KINDS:
            raise CseError(f"unknown mask op {self.kind!r}")
        if self.kind == "fill-constant" and not all(0.0 <= v <= 1.0 for v in self.rgb):
            raise CseError("fill values must lie in [0,1]")
        if self.kind == "gaussian-blur" and self.sigma <= 0:
            raise CseError("blur sigma must be positive")
        if self.kind == "pixelate" and self.block < 2:
            raise CseError("pixelate block must be >= 2")

    def describe(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "fill-constant":
            d["rgb"] = list(self.rgb)
        elif self.kind == "gaussian-blur":
            d["sigma"] = self.sigma
        elif self.kind == "pixelate":
            d["block"] = self.block
        return d


def parse_mask_op(text: str) -> MaskOp:
    """CLI spelling: means | black | constant:r,g,b | blur[:sigma] | pixelate[:block]."""
    name, _, arg = text.partition(":")
    if name == "means":
        return MaskOp("fill-channel-means")
    if name == "black":
        return MaskOp("fill-constant", rgb=(0.0, 0.0, 0.0))
    if name == "constant":
        rgb = tuple(float(v) for v in arg.split(","))
        if len(rgb) != 3:
            raise CseError("constant fill needs r,g,b")
        return MaskOp("fill-constant", rgb=rgb)
    if name == "blur":
        return MaskOp("gaussian-blur", sigma=float(arg) if arg else 4.0)
    if name == "pixelate":
        return MaskOp("pixelate", block=int(arg) if arg else 8)
    raise CseError(f"unknown mask op {text!r}")


def _filled_image(image: np.ndarray, op: MaskOp, channel_means) -> np.ndarray:
    """The fully transformed image the mask composites from."""
    if op.kind == "fill-channel-means":
        if channel_means is None:
            raise CseError("fill-channel-means needs the model's channel means")
        return np.broadcast_to(np.asarray(channel_means, np.float32), image.shape)
    if op.kind == "fill-constant":
        return np.broadcast_to(np.asarray(op.rgb, np.float32), image.shape)
    if op.kind == "gaussian-blur":
        out = np.empty_like(image)
        for c in range(3):
            out[..., c] = ndimage.gaussian_filter(image[..., c], sigma=op.sigma,
                                                  mode="reflect")
        return out
    # pixelate: mean over aligned block cells
    h, w = image.shape[:2]
    out = np.empty_like(image)
    for y0 in range(0, h, op.block):
        for x0 in range(0, w, op.block):
            cell = image[y0:y0 + op.block, x0:x0 + op.block]
            out[y0:y0 + op.block, x0:x0 + op.block] = cell.mean(axis=(0, 1))
    return out


def apply_mask(image: np.ndarray, region_mask: np.ndarray, op: MaskOp,
               channel_means=None) -> np.ndarray:
    """Transform pixels where region_mask is true; everything else is copied verbatim."""
    if region_mask.shape != image.shape[:2]:
        raise ShapeMismatchError(f"mask {region_mask.shape} vs image {image.shape[:2]}")
    out = image.copy()
    if not region_mask.any():
        return out
    filled = _filled_image(image, op, channel_means)
    out[region_mask] = filled[region_mask]
    return out


def mask_for_regions(labels: np.ndarray, region_ids) -> np.ndarray:
    """Boolean mask of the union of the given label-map regions."""
    return np.isin(labels, list(region_ids))


def render_obfuscated(image: np.ndarray, result, labels: np.ndarray, op: MaskOp,
                      channel_means=None) -> np.ndarray:
    """Final deliverable: obfuscate exactly the result's masked regions."""
    if not result.success:
        raise CseError("cannot render a failed counterfactual result")
    if labels.shape != image.shape[:2]:
        raise ShapeMismatchError(f"labels {labels.shape} vs image {image.shape[:2]}")
    mask = mask_for_regions(labels, result.masked_region_ids)
    return apply_mask(image, mask, op, channel_means)
