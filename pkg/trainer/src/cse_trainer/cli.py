"""`cse-train`: train the toy classifier and export CSEW weights."""

from __future__ import annotations

import sys

import click

from .train import ACCURACY_FLOOR, TrainConfig, train_and_export


@click.command()
@click.option("--corpus", "corpus_dir", default="train-corpus", show_default=True,
              help="corpus directory; generated via `cse gen-corpus` if missing")
@click.option("--corpus-seed", default=0, show_default=True)
@click.option("--corpus-size", default=1000, show_default=True)
@click.option("--epochs", default=12, show_default=True)
@click.option("--lr", default=1e-3, show_default=True)
@click.option("--train-seed", default=0, show_default=True)
@click.option("--out", "export_path", default="reference.csew", show_default=True)
@click.option("--metrics", "metrics_path", default="train_metrics.json", show_default=True)
def main(corpus_dir, corpus_seed, corpus_size, epochs, lr, train_seed, export_path,
         metrics_path):
    config = TrainConfig(corpus_dir=corpus_dir, corpus_seed=corpus_seed,
                         corpus_size=corpus_size, epochs=epochs, learning_rate=lr,
                         train_seed=train_seed, export_path=export_path,
                         metrics_path=metrics_path)
    metrics = train_and_export(config)
    click.echo(f"test accuracy {metrics['test_accuracy']:.3f} -> {export_path}")
    if metrics["below_accuracy_floor"]:
        click.echo(f"WARNING: accuracy below floor {ACCURACY_FLOOR}; "
                   "file written anyway", err=True)
        sys.exit(4)


if __name__ == "__main__":
    main()
