"""Writer for the CSEW binary weight format the inference engine consumes.

This is an independent implementation of the file format contract; it shares
no code with the inference side.  Layout (little-endian):
  magic "CSEW", u32 version=1, u32 biased-layer count
  per biased layer: u8 kind (0=conv2d, 1=linear), u32 ndim, u32 dims...,
                    f32 weights (row-major), u32 bias length, f32 biases
  footer: 3 x f32 training-set channel means,
          u32 parity-vector count, per vector 3*64*64 f32 input + 2 f32 logits
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"CSEW"
VERSION = 1
KIND_CONV = 0
KIND_LINEAR = 1

INPUT_SHAPE = (3, 64, 64)
NUM_CLASSES = 2
# (kind, weight shape) of the biased layers, in network order
LAYOUT = (
    (KIND_CONV, (8, 3, 3, 3)),
    (KIND_CONV, (16, 8, 3, 3)),
    (KIND_CONV, (32, 16, 3, 3)),
    (KIND_LINEAR, (NUM_CLASSES, 32)),
)


def write_csew(path, weights, biases, channel_means, parity_inputs, parity_logits):
    """weights/biases: lists ordered per LAYOUT; parity arrays may be empty."""
    if len(weights) != len(LAYOUT) or len(biases) != len(LAYOUT):
        raise ValueError("expected one weight and bias per biased layer")
    parts = [MAGIC, struct.pack("<II", VERSION, len(LAYOUT))]
    for (kind, shape), w, b in zip(LAYOUT, weights, biases):
        w = np.ascontiguousarray(w, dtype="<f4")
        if w.shape != shape:
            raise ValueError(f"weight shape {w.shape} does not match layout {shape}")
        parts.append(struct.pack("<BI", kind, w.ndim))
        parts.append(struct.pack(f"<{w.ndim}I", *w.shape))
        parts.append(w.tobytes())
        b = np.ascontiguousarray(b, dtype="<f4")
        if b.shape != (shape[0],):
            raise ValueError(f"bias shape {b.shape} does not match layout ({shape[0]},)")
        parts.append(struct.pack("<I", b.size))
        parts.append(b.tobytes())
    means = np.ascontiguousarray(channel_means, dtype="<f4")
    if means.shape != (3,):
        raise ValueError("channel means must be 3 floats")
    parts.append(means.tobytes())
    parity_inputs = np.asarray(parity_inputs, dtype="<f4").reshape(-1, int(np.prod(INPUT_SHAPE)))
    parity_logits = np.asarray(parity_logits, dtype="<f4").reshape(-1, NUM_CLASSES)
    n = parity_inputs.shape[0]
    if parity_logits.shape[0] != n:
        raise ValueError("parity inputs/logits count mismatch")
    parts.append(struct.pack("<I", n))
    if n:
        parts.append(np.ascontiguousarray(
            np.concatenate([parity_inputs, parity_logits], axis=1), dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))
