"""CSEW binary weight files.

Little-endian layout:
  magic "CSEW", u32 version=1, u32 biased-layer count
  per biased layer: u8 kind (0=conv2d, 1=linear), u32 ndim, u32 dims...,
                    f32 weights (row-major), u32 bias length, f32 biases
  footer: 3 x f32 training-set channel means,
          u32 parity-vector count, then per vector 3*64*64 f32 input + 2 f32 logits
"""

from __future__ import annotations

import struct

import numpy as np

from .engine import ARCHITECTURE, INPUT_SHAPE, NUM_CLASSES, NetworkModel, build_layers
from .errors import WeightFileError

MAGIC = b"CSEW"
VERSION = 1
_KIND_TAGS = {"conv2d": 0, "linear": 1}
_PARITY_FLOATS = INPUT_SHAPE[0] * INPUT_SHAPE[1] * INPUT_SHAPE[2] + NUM_CLASSES


def save_model(model: NetworkModel, path) -> None:
    biased = model.biased_layers()
    parts = [MAGIC, struct.pack("<II", VERSION, len(biased))]
    for layer in biased:
        w = np.ascontiguousarray(layer.weight, dtype="<f4")
        parts.append(struct.pack("<BI", _KIND_TAGS[layer.kind], w.ndim))
        parts.append(struct.pack(f"<{w.ndim}I", *w.shape))
        parts.append(w.tobytes())
        b = np.ascontiguousarray(layer.bias, dtype="<f4")
        parts.append(struct.pack("<I", b.size))
        parts.append(b.tobytes())
    parts.append(np.ascontiguousarray(model.channel_means, dtype="<f4").tobytes())
    n = model.parity_inputs.shape[0]
    parts.append(struct.pack("<I", n))
    if n:
        vecs = np.concatenate(
            [model.parity_inputs.reshape(n, -1), model.parity_logits.reshape(n, -1)], axis=1
        )
        parts.append(np.ascontiguousarray(vecs, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.off = 0

    def take(self, fmt):
        vals = struct.unpack_from("<" + fmt, self.data, self.off)
        self.off += struct.calcsize("<" + fmt)
        return vals if len(vals) > 1 else vals[0]

    def floats(self, count) -> np.ndarray:
        arr = np.frombuffer(self.data, dtype="<f4", count=count, offset=self.off)
        self.off += 4 * count
        return arr.astype(np.float32)


def load_model(path) -> NetworkModel:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise WeightFileError(f"{path}: bad magic {data[:4]!r}")
    r = _Reader(data)
    r.off = 4
    version, count = r.take("II")
    if version != VERSION:
        raise WeightFileError(f"{path}: unsupported version {version}")
    if count != len(ARCHITECTURE):
        raise WeightFileError(f"{path}: expected {len(ARCHITECTURE)} biased layers, found {count}")

    weights, biases = [], []
    for kind, cin, cout in ARCHITECTURE:
        tag, ndim = r.take("BI")
        if tag != _KIND_TAGS[kind]:
            raise WeightFileError(f"{path}: layer kind tag {tag} does not match fixed architecture")
        dims = tuple(int(d) for d in np.atleast_1d(r.take(f"{ndim}I")))
        expected = (cout, cin, 3, 3) if kind == "conv2d" else (cout, cin)
        if dims != expected:
            raise WeightFileError(f"{path}: layer dims {dims} != {expected}")
        weights.append(r.floats(int(np.prod(dims))).reshape(dims))
        blen = r.take("I")
        if blen != cout:
            raise WeightFileError(f"{path}: bias length {blen} != {cout}")
        biases.append(r.floats(blen))

    channel_means = r.floats(3)
    n = r.take("I")
    parity_inputs = np.zeros((0,) + INPUT_SHAPE, np.float32)
    parity_logits = np.zeros((0, NUM_CLASSES), np.float32)
    if n:
        vecs = r.floats(n * _PARITY_FLOATS).reshape(n, _PARITY_FLOATS)
        parity_inputs = vecs[:, : -NUM_CLASSES].reshape((n,) + INPUT_SHAPE)
        parity_logits = vecs[:, -NUM_CLASSES:]
    if r.off != len(data):
        raise WeightFileError(f"{path}: {len(data) - r.off} trailing bytes")

    layers = build_layers(weights[:3], biases[:3], weights[3], biases[3])
    return NetworkModel(layers=layers, channel_means=channel_means,
                        parity_inputs=parity_inputs, parity_logits=parity_logits)
