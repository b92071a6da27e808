"""Per-pixel attribution maps from the engine's gradients.

FullGrad aggregates the input-gradient term with every layer's bias-gradient
term; for the all-ReLU/pool network the raw (pre-postprocessing) terms sum
exactly to the target logit, which the tests exploit as an oracle.  Grad-CAM
is kept as the single CAM-style baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from skimage.transform import resize

from . import engine
from .errors import CseError, ShapeMismatchError


@dataclass
class AttributionMap:
    values: np.ndarray   # (H, W), in [0,1], max 1 unless all-zero
    target_class: int
    method: str


def psi_postprocess(raw: np.ndarray, out_shape=(64, 64)) -> np.ndarray:
    """abs -> (sum over leading channel axis if 3-D) -> bilinear upsample ->
    min-max rescale to [0,1]; a constant map rescales to all zeros."""
    m = np.abs(np.asarray(raw, dtype=np.float64))
    if m.ndim == 3:
        m = m.sum(axis=0)
    if m.shape != tuple(out_shape):
        m = resize(m, out_shape, order=1, mode="edge", anti_aliasing=False,
                   preserve_range=True)
    lo, hi = m.min(), m.max()
    if hi - lo <= 0:
        return np.zeros(out_shape, dtype=np.float32)
    return ((m - lo) / (hi - lo)).astype(np.float32)


def _to_chw(image: np.ndarray) -> np.ndarray:
    if image.ndim != 3 or image.shape[2] != 3:
        raise ShapeMismatchError(f"expected HxWx3 image, got {image.shape}")
    return np.transpose(image, (2, 0, 1)).astype(np.float32)


def _normalize(values: np.ndarray) -> np.ndarray:
    peak = values.max()
    if peak > 0:
        values = values / peak
    return values.astype(np.float32)


def fullgrad(model: engine.NetworkModel, image: np.ndarray) -> AttributionMap:
    """Input-gradient term plus per-channel bias-gradient terms, postprocessed
    and summed; target is the predicted class."""
    x = _to_chw(image)
    out_shape = x.shape[1:]
    fwd = engine.forward(model, x)
    target = int(np.argmax(fwd.logits))
    bwd = engine.backward(model, x, target, fwd)

    total = psi_postprocess(bwd.input_grad * x, out_shape).astype(np.float64)
    for layer, bias_grad in zip(model.biased_layers(), bwd.bias_grads):
        if layer.kind == "conv2d":
            weighted = bias_grad * layer.bias[:, None, None]
            for c in range(weighted.shape[0]):
                total += psi_postprocess(weighted[c], out_shape)
        else:  # linear: spatially uniform term, zero after min-max by convention
            total += psi_postprocess(np.full(out_shape, float(bias_grad @ layer.bias)),
                                     out_shape)
    return AttributionMap(values=_normalize(total), target_class=target, method="fullgrad")


def gradcam(model: engine.NetworkModel, image: np.ndarray, layer_index: int = None) -> AttributionMap:
    """Gradient-weighted activation map at one conv layer, upsampled to input size."""
    x = _to_chw(image)
    conv_indices = model.conv_layer_indices()
    if layer_index is None:
        layer_index = conv_indices[-1]
    if layer_index not in conv_indices:
        raise CseError(f"layer {layer_index} is not a conv layer (conv layers: {conv_indices})")
    fwd = engine.forward(model, x)
    target = int(np.argmax(fwd.logits))
    bwd = engine.backward(model, x, target, fwd)

    acts = fwd.activations[layer_index]
    grads = bwd.layer_grads[layer_index]
    channel_weights = grads.mean(axis=(1, 2))
    cam = np.maximum((channel_weights[:, None, None] * acts).sum(axis=0), 0.0)
    if cam.max() <= 0:
        values = np.zeros(x.shape[1:], dtype=np.float32)
    else:
        values = psi_postprocess(cam, x.shape[1:])
    return AttributionMap(values=values, target_class=target, method="gradcam")


def completeness_gap(model: engine.NetworkModel, x_chw: np.ndarray, target: int = None):
    """(logit, reconstruction from gradient terms) for the FullGrad identity check."""
    fwd = engine.forward(model, x_chw)
    if target is None:
        target = int(np.argmax(fwd.logits))
    bwd = engine.backward(model, x_chw, target, fwd)
    total = float(np.vdot(bwd.input_grad, x_chw))
    for layer, bias_grad in zip(model.biased_layers(), bwd.bias_grads):
        if layer.kind == "conv2d":
            total += float(bias_grad.sum(axis=(1, 2)) @ layer.bias)
        else:
            total += float(bias_grad @ layer.bias)
    return float(fwd.logits[target]), total


def map_entropy(attr: AttributionMap) -> float:
    """Shannon entropy of the normalized map, a dispersion diagnostic."""
    v = attr.values.reshape(-1).astype(np.float64)
    s = v.sum()
    if s <= 0:
        return 0.0
    p = v / s
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


METHODS = {"fullgrad": fullgrad, "gradcam": gradcam}
