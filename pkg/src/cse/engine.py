"""Dense forward/backward engine for the fixed toy classifier.

The network is a fixed stack of conv/ReLU/maxpool blocks ending in a global
average pool and a linear head.  Everything is float32 numpy; there is no
autograd graph, just hand-written backward rules for the five layer kinds.
Besides the input gradient, backward exposes per-layer bias gradients (as
spatial maps for conv layers) because the attribution stage needs them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatchError

INPUT_SHAPE = (3, 64, 64)
NUM_CLASSES = 2
CLASS_NAMES = ("safe", "unsafe")
UNSAFE_CLASS = 1

# (kind, in_channels, out_channels) for the biased layers, in network order.
ARCHITECTURE = (
    ("conv2d", 3, 8),
    ("conv2d", 8, 16),
    ("conv2d", 16, 32),
    ("linear", 32, NUM_CLASSES),
)


@dataclass
class ConvLayer:
    kind = "conv2d"
    weight: np.ndarray  # (out, in, 3, 3)
    bias: np.ndarray    # (out,)


@dataclass
class ReluLayer:
    kind = "relu"


@dataclass
class MaxPoolLayer:
    kind = "maxpool2"


@dataclass
class GlobalAvgPoolLayer:
    kind = "avgpool-global"


@dataclass
class LinearLayer:
    kind = "linear"
    weight: np.ndarray  # (out, in)
    bias: np.ndarray    # (out,)


@dataclass
class NetworkModel:
    layers: list
    channel_means: np.ndarray          # (3,) training-set means, used as fill values
    parity_inputs: np.ndarray = field(default_factory=lambda: np.zeros((0,) + INPUT_SHAPE, np.float32))
    parity_logits: np.ndarray = field(default_factory=lambda: np.zeros((0, NUM_CLASSES), np.float32))

    def biased_layers(self):
        return [l for l in self.layers if l.kind in ("conv2d", "linear")]

    def conv_layer_indices(self):
        return [i for i, l in enumerate(self.layers) if l.kind == "conv2d"]


def build_layers(conv_weights, conv_biases, linear_weight, linear_bias) -> list:
    """Assemble the fixed layer stack from the four biased layers' parameters."""
    (w1, w2, w3), (b1, b2, b3) = conv_weights, conv_biases
    return [
        ConvLayer(w1.astype(np.float32), b1.astype(np.float32)),
        ReluLayer(),
        MaxPoolLayer(),
        ConvLayer(w2.astype(np.float32), b2.astype(np.float32)),
        ReluLayer(),
        MaxPoolLayer(),
        ConvLayer(w3.astype(np.float32), b3.astype(np.float32)),
        ReluLayer(),
        GlobalAvgPoolLayer(),
        LinearLayer(linear_weight.astype(np.float32), linear_bias.astype(np.float32)),
    ]


def random_model(seed: int, scale: float = None) -> NetworkModel:
    """Seeded He-initialized model, used by gradient-check and property tests."""
    rng = np.random.default_rng(seed)
    convs, conv_biases = [], []
    for kind, cin, cout in ARCHITECTURE[:3]:
        std = np.sqrt(2.0 / (cin * 9)) if scale is None else scale
        convs.append(rng.normal(0.0, std, (cout, cin, 3, 3)).astype(np.float32))
        conv_biases.append(rng.normal(0.0, 0.05, cout).astype(np.float32))
    lw = rng.normal(0.0, np.sqrt(2.0 / 32), (NUM_CLASSES, 32)).astype(np.float32)
    lb = rng.normal(0.0, 0.05, NUM_CLASSES).astype(np.float32)
    layers = build_layers(convs, conv_biases, lw, lb)
    return NetworkModel(layers=layers, channel_means=np.full(3, 0.5, np.float32))


def _im2col(x: np.ndarray) -> np.ndarray:
    """3x3/stride-1/pad-1 patches of x (C,H,W) as a (C*9, H*W) matrix."""
    c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    cols = np.empty((c, 9, h, w), dtype=np.float32)
    k = 0
    for di in range(3):
        for dj in range(3):
            cols[:, k] = xp[:, di:di + h, dj:dj + w]
            k += 1
    return cols.reshape(c * 9, h * w)


def _col2im(cols: np.ndarray, shape) -> np.ndarray:
    """Adjoint of _im2col: scatter (C*9, H*W) patch gradients back to (C,H,W)."""
    c, h, w = shape
    cols = cols.reshape(c, 9, h, w)
    xp = np.zeros((c, h + 2, w + 2), dtype=np.float32)
    k = 0
    for di in range(3):
        for dj in range(3):
            xp[:, di:di + h, dj:dj + w] += cols[:, k]
            k += 1
    return xp[:, 1:1 + h, 1:1 + w]


@dataclass
class ForwardResult:
    logits: np.ndarray
    activations: list  # activations[i] is the output of layers[i]; input is not stored
    pool_argmax: dict  # layer index -> flat argmax indices for maxpool layers


def forward(model: NetworkModel, x: np.ndarray) -> ForwardResult:
    """Run the network on one image (3,64,64); caches per-layer outputs."""
    x = np.asarray(x, dtype=np.float32)
    if x.shape != INPUT_SHAPE:
        raise ShapeMismatchError(f"expected input shape {INPUT_SHAPE}, got {x.shape}")
    activations = []
    pool_argmax = {}
    out = x
    for li, layer in enumerate(model.layers):
        if layer.kind == "conv2d":
            c, h, w = out.shape
            cols = _im2col(out)
            o = layer.weight.shape[0]
            out = (layer.weight.reshape(o, c * 9) @ cols).reshape(o, h, w)
            out += layer.bias[:, None, None]
        elif layer.kind == "relu":
            out = np.maximum(out, 0.0)
        elif layer.kind == "maxpool2":
            c, h, w = out.shape
            win = out.reshape(c, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h // 2, w // 2, 4)
            idx = win.argmax(axis=3)
            pool_argmax[li] = idx
            out = np.take_along_axis(win, idx[..., None], axis=3)[..., 0]
        elif layer.kind == "avgpool-global":
            out = out.mean(axis=(1, 2))
        elif layer.kind == "linear":
            out = layer.weight @ out + layer.bias
        activations.append(out)
    return ForwardResult(logits=activations[-1], activations=activations, pool_argmax=pool_argmax)


@dataclass
class BackwardResult:
    input_grad: np.ndarray
    bias_grads: list        # per biased layer: conv -> (O,H,W) spatial map, linear -> (O,)
    layer_grads: list       # gradient w.r.t. the output of every layer


def backward(model: NetworkModel, x: np.ndarray, target_logit_index: int,
             fwd: ForwardResult = None) -> BackwardResult:
    """Gradient of one pre-softmax logit w.r.t. the input and every bias.

    Conv bias gradients are returned as per-channel spatial maps (the gradient
    at each output location where the bias is broadcast); summing a map over
    space gives the gradient w.r.t. the actual bias entry.
    """
    x = np.asarray(x, dtype=np.float32)
    if fwd is None:
        fwd = forward(model, x)
    n = len(fwd.logits)
    if not 0 <= target_logit_index < n:
        raise IndexError(f"target logit index {target_logit_index} out of range [0, {n})")

    grad = np.zeros(n, dtype=np.float32)
    grad[target_logit_index] = 1.0
    layer_grads = [None] * len(model.layers)
    bias_grads_rev = []

    for li in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[li]
        layer_grads[li] = grad
        inp = x if li == 0 else fwd.activations[li - 1]
        if layer.kind == "linear":
            bias_grads_rev.append(grad.copy())
            grad = layer.weight.T @ grad
        elif layer.kind == "avgpool-global":
            c, h, w = inp.shape
            grad = np.broadcast_to(grad[:, None, None] / (h * w), (c, h, w)).astype(np.float32)
        elif layer.kind == "maxpool2":
            c, h, w = inp.shape
            idx = fwd.pool_argmax[li]
            win = np.zeros((c, h // 2, w // 2, 4), dtype=np.float32)
            np.put_along_axis(win, idx[..., None], grad[..., None], axis=3)
            grad = win.reshape(c, h // 2, w // 2, 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h, w)
        elif layer.kind == "relu":
            grad = grad * (inp > 0)
        elif layer.kind == "conv2d":
            bias_grads_rev.append(grad.copy())  # pre-activation grad == broadcast bias grad
            o, c = layer.weight.shape[:2]
            h, w = grad.shape[1:]
            cols_grad = layer.weight.reshape(o, c * 9).T @ grad.reshape(o, h * w)
            grad = _col2im(cols_grad, inp.shape)

    return BackwardResult(input_grad=grad, bias_grads=bias_grads_rev[::-1], layer_grads=layer_grads)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Max-stabilized softmax."""
    z = np.asarray(logits, dtype=np.float64)
    if z.size == 0:
        raise ShapeMismatchError("softmax of empty logits")
    z = z - z.max()
    e = np.exp(z)
    return (e / e.sum()).astype(np.float32)


def predict(model: NetworkModel, x: np.ndarray):
    """Convenience: (predicted class, softmax probabilities, logits)."""
    logits = forward(model, x).logits
    probs = softmax(logits)
    return int(np.argmax(logits)), probs, logits
