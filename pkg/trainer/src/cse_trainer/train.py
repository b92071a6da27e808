"""Deterministic training of the fixed toy CNN on the synthetic corpus."""

from __future__ import annotations

import json
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torch import nn

from .csew import INPUT_SHAPE, NUM_CLASSES, write_csew

ACCURACY_FLOOR = 0.95


@dataclass
class TrainConfig:
    corpus_dir: str
    corpus_seed: int = 0
    corpus_size: int = 1000
    epochs: int = 12
    learning_rate: float = 1e-3
    batch_size: int = 32
    train_frac: float = 0.8
    val_frac: float = 0.1
    test_frac: float = 0.1
    train_seed: int = 0
    activation_l1: float = 1.0  # sparsity pressure keeps feature channels localized
    parity_vectors: int = 8
    export_path: str = "reference.csew"
    metrics_path: str = "train_metrics.json"

    def __post_init__(self):
        if abs(self.train_frac + self.val_frac + self.test_frac - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")


class ToyCnn(nn.Module):
    """conv(3-8)-relu-pool / conv(8-16)-relu-pool / conv(16-32)-relu-gap / linear(32-2)."""

    def __init__(self):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv2d(3, 8, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2),
            nn.Conv2d(8, 16, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2),
            nn.Conv2d(16, 32, 3, padding=1), nn.ReLU(),
            nn.AdaptiveAvgPool2d(1),
        )
        self.head = nn.Linear(32, NUM_CLASSES)

    def forward(self, x):
        return self.head(self.features(x).flatten(1))

    def forward_with_activations(self, x):
        acts = []
        out = x
        for layer in self.features:
            out = layer(out)
            if isinstance(layer, nn.ReLU):
                acts.append(out)
        return self.head(out.flatten(1)), acts


def ensure_corpus(config: TrainConfig) -> Path:
    """Generate the corpus through the primary's gen-corpus CLI if missing."""
    corpus_dir = Path(config.corpus_dir)
    if not (corpus_dir / "manifest.json").exists():
        subprocess.run(
            ["cse", "gen-corpus", str(corpus_dir), "--count", str(config.corpus_size),
             "--seed", str(config.corpus_seed)],
            check=True,
        )
    return corpus_dir


def load_corpus(corpus_dir: Path):
    manifest = json.loads((corpus_dir / "manifest.json").read_text())
    images, labels = [], []
    for entry in manifest["entries"]:
        with Image.open(corpus_dir / entry["file"]) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
        images.append(arr.transpose(2, 0, 1))
        labels.append(entry["label"])
    return np.stack(images), np.asarray(labels, dtype=np.int64)


def split_indices(n: int, config: TrainConfig, rng: np.random.Generator):
    order = rng.permutation(n)
    n_train = int(round(n * config.train_frac))
    n_val = int(round(n * config.val_frac))
    return order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:]


def _accuracy(model: ToyCnn, x: torch.Tensor, y: torch.Tensor) -> float:
    model.eval()
    with torch.no_grad():
        pred = model(x).argmax(dim=1)
    return float((pred == y).float().mean())


def train_and_export(config: TrainConfig) -> dict:
    """Train, export the CSEW file, and return the metrics record."""
    torch.manual_seed(config.train_seed)
    torch.use_deterministic_algorithms(True)

    corpus_dir = ensure_corpus(config)
    images, labels = load_corpus(corpus_dir)
    rng = np.random.default_rng(config.train_seed)
    tr, va, te = split_indices(len(images), config, rng)

    x_tr = torch.from_numpy(images[tr])
    y_tr = torch.from_numpy(labels[tr])
    x_va, y_va = torch.from_numpy(images[va]), torch.from_numpy(labels[va])
    x_te, y_te = torch.from_numpy(images[te]), torch.from_numpy(labels[te])
    channel_means = images[tr].mean(axis=(0, 2, 3))

    model = ToyCnn()
    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    loss_fn = nn.CrossEntropyLoss()
    best_val, best_state = -1.0, None

    for epoch in range(config.epochs):
        model.train()
        order = torch.from_numpy(rng.permutation(len(x_tr)))
        for start in range(0, len(x_tr), config.batch_size):
            idx = order[start:start + config.batch_size]
            opt.zero_grad()
            logits, acts = model.forward_with_activations(x_tr[idx])
            loss = loss_fn(logits, y_tr[idx])
            loss = loss + config.activation_l1 * sum(a.mean() for a in acts)
            loss.backward()
            opt.step()
        val_acc = _accuracy(model, x_va, y_va)
        if val_acc > best_val:
            best_val = val_acc
            best_state = {k: v.clone() for k, v in model.state_dict().items()}

    model.load_state_dict(best_state)
    test_acc = _accuracy(model, x_te, y_te)

    # parity vectors: first test images, balanced by construction of the split
    n_par = min(config.parity_vectors, len(x_te))
    par_x = x_te[:n_par]
    model.eval()
    with torch.no_grad():
        par_logits = model(par_x).numpy().astype(np.float32)

    sd = model.state_dict()
    weights = [sd["features.0.weight"].numpy(), sd["features.3.weight"].numpy(),
               sd["features.6.weight"].numpy(), sd["head.weight"].numpy()]
    biases = [sd["features.0.bias"].numpy(), sd["features.3.bias"].numpy(),
              sd["features.6.bias"].numpy(), sd["head.bias"].numpy()]
    write_csew(config.export_path, weights, biases, channel_means,
               par_x.numpy(), par_logits)

    metrics = {
        "corpus": str(corpus_dir),
        "corpus_seed": config.corpus_seed,
        "train_seed": config.train_seed,
        "split": [len(tr), len(va), len(te)],
        "epochs": config.epochs,
        "best_val_accuracy": round(best_val, 4),
        "test_accuracy": round(test_acc, 4),
        "parity_vectors": n_par,
        "export": str(config.export_path),
        "below_accuracy_floor": test_acc < ACCURACY_FLOOR,
        "torch_version": torch.__version__,
    }
    Path(config.metrics_path).write_text(json.dumps(metrics, indent=2))
    return metrics
