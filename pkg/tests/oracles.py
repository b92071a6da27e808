"""Independent reference implementations used as test oracles.

The reference forward pass runs in float64 via scipy correlation, sharing no
code with the engine's im2col path.  It also reports the network's piecewise-
linear "signature" (ReLU masks and pool argmax choices) so finite-difference
probes can detect and skip kink crossings, where the derivative is undefined.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage


def ref_forward(model, x):
    """Float64 forward pass; returns (logits, signature)."""
    out = np.asarray(x, dtype=np.float64)
    signature = []
    for layer in model.layers:
        if layer.kind == "conv2d":
            w = layer.weight.astype(np.float64)
            o = w.shape[0]
            nxt = np.empty((o,) + out.shape[1:])
            for oc in range(o):
                acc = np.zeros(out.shape[1:])
                for ic in range(out.shape[0]):
                    acc += ndimage.correlate(out[ic], w[oc, ic], mode="constant", cval=0.0)
                nxt[oc] = acc + float(layer.bias[oc])
            out = nxt
        elif layer.kind == "relu":
            signature.append(out > 0)
            out = np.maximum(out, 0.0)
        elif layer.kind == "maxpool2":
            c, h, w = out.shape
            win = out.reshape(c, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 2, 4).reshape(
                c, h // 2, w // 2, 4)
            idx = win.argmax(axis=3)
            signature.append(idx)
            out = np.take_along_axis(win, idx[..., None], axis=3)[..., 0]
        elif layer.kind == "avgpool-global":
            out = out.mean(axis=(1, 2))
        elif layer.kind == "linear":
            out = layer.weight.astype(np.float64) @ out + layer.bias.astype(np.float64)
    return out, signature


def _same_signature(sig_a, sig_b) -> bool:
    return all(np.array_equal(a, b) for a, b in zip(sig_a, sig_b))


def fd_input_grad(model, x, coord, target, h=1e-3):
    """Central finite difference of one logit w.r.t. one input pixel, or None
    if the probe crosses a ReLU/pool kink (derivative undefined there)."""
    c, i, j = coord
    xp = np.array(x, dtype=np.float64)
    xm = xp.copy()
    xp[c, i, j] += h
    xm[c, i, j] -= h
    fp, sp = ref_forward(model, xp)
    fm, sm = ref_forward(model, xm)
    if not _same_signature(sp, sm):
        return None
    return (fp[target] - fm[target]) / (2 * h)


def fd_bias_grad(model, x, layer_pos, bias_index, target, h=1e-3):
    """Central finite difference w.r.t. one bias entry of a biased layer."""
    biased = model.biased_layers()
    layer = biased[layer_pos]
    orig = layer.bias.copy()
    try:
        layer.bias = orig.astype(np.float64).copy()
        layer.bias[bias_index] += h
        fp, sp = ref_forward(model, x)
        layer.bias[bias_index] = orig[bias_index] - h
        fm, sm = ref_forward(model, x)
    finally:
        layer.bias = orig
    if not _same_signature(sp, sm):
        return None
    return (fp[target] - fm[target]) / (2 * h)


def relative_error(a, b, floor=1e-4) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)
