"""`cse` command line: explain | bench | segment | attribute | gen-corpus.

Exit codes: 0 success, 2 input not flagged unsafe, 3 no counterfactual within
budget, 1 any other error.
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import attribution, bench as bench_mod, corpus as corpus_mod, engine
from .counterfactual import greedy_counterfactual, region_scores
from .errors import CseError, NotFlaggedUnsafeError
from .image_io import (load_image, project_mask_to_original, resize_to_model,
                       save_attribution, save_image, save_labelmap)
from .obfuscation import apply_mask, mask_for_regions, parse_mask_op
from .segmentation import num_regions

EXIT_NOT_UNSAFE = 2
EXIT_NO_COUNTERFACTUAL = 3


def parse_seg_config(text: str) -> dict:
    """grid[:RxC] | slic[:N[:COMPACTNESS]] | bass[:K[:SWEEPS]]"""
    name, _, rest = text.partition(":")
    if name == "grid":
        rows, cols = (int(v) for v in rest.split("x")) if rest else (3, 3)
        return {"method": "grid", "rows": rows, "cols": cols}
    if name == "slic":
        parts = rest.split(":") if rest else []
        cfg = dict(bench_mod.DEFAULT_SEGMENTERS["slic"])
        if parts and parts[0]:
            cfg["n_segments"] = int(parts[0])
        if len(parts) > 1:
            cfg["compactness"] = float(parts[1])
        return cfg
    if name == "bass":
        parts = rest.split(":") if rest else []
        cfg = dict(bench_mod.DEFAULT_SEGMENTERS["bass"])
        if parts and parts[0]:
            cfg["init_components"] = int(parts[0])
        if len(parts) > 1:
            cfg["gibbs_sweeps"] = int(parts[1])
        return cfg
    raise CseError(f"unknown segmenter {text!r}")


@click.group()
def main():
    """Counterfactual subobject explanations for image obfuscation."""


@main.command()
@click.argument("image_path", type=click.Path(exists=True))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--seg", default="bass", show_default=True, help="grid[:RxC] | slic[:N] | bass[:K]")
@click.option("--attr", default="fullgrad", show_default=True,
              type=click.Choice(sorted(attribution.METHODS)))
@click.option("--T", "threshold", default=0.5, show_default=True)
@click.option("--budget", default=10, show_default=True)
@click.option("--mask", default="means", show_default=True,
              help="means | black | constant:r,g,b | blur[:sigma] | pixelate[:block]")
@click.option("--render-mask", default=None,
              help="mask op for the rendered output when it should differ from the search mask")
@click.option("--rerank-by-cr", is_flag=True,
              help="re-sort remaining regions by measured confidence reduction each step")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_dir", default="cse-out", show_default=True)
def explain(image_path, model_path, seg, attr, threshold, budget, mask, render_mask,
            rerank_by_cr, seed, out_dir):
    """Produce a minimal counterfactual obfuscation of one flagged image."""
    from .weights import load_model

    model = load_model(model_path)
    original = load_image(image_path)
    view = resize_to_model(original)
    seg_cfg = parse_seg_config(seg)
    mask_op = parse_mask_op(mask)
    render_op = parse_mask_op(render_mask) if render_mask else mask_op

    try:
        labels = bench_mod.segment_with(view, seg_cfg, seed)
        amap = attribution.METHODS[attr](model, view)
        scores = region_scores(amap.values, labels)
        result = greedy_counterfactual(model, view, labels, scores, threshold, budget,
                                       mask_op, rerank_by_cr=rerank_by_cr)
    except NotFlaggedUnsafeError as exc:
        click.echo(f"not flagged: {exc}", err=True)
        sys.exit(EXIT_NOT_UNSAFE)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    record = {
        "input": str(image_path),
        "model": str(model_path),
        "config": {"seg": seg_cfg, "attr": attr, "T": threshold, "budget": budget,
                   "mask": mask_op.describe(), "render_mask": render_op.describe(),
                   "rerank_by_cr": rerank_by_cr, "seed": seed},
        "K": num_regions(labels),
        "result": result.to_dict(),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }

    if result.success:
        union = mask_for_regions(labels, result.masked_region_ids)
        full_mask = project_mask_to_original(union, original.shape)
        rendered = apply_mask(original, full_mask, render_op, model.channel_means)
        out_image = out_dir / "obfuscated.png"
        save_image(rendered, out_image)
        record["output_image"] = str(out_image)
        if render_op.kind != mask_op.kind:
            check = apply_mask(view, union, render_op, model.channel_means)
            cls, probs, _ = engine.predict(model, np.transpose(check, (2, 0, 1)))
            record["render_mask_flip"] = {
                "class": engine.CLASS_NAMES[cls],
                "score": round(float(probs[cls]), 6),
                "still_flipped": cls != result.original_class,
            }

    (out_dir / "result.json").write_text(json.dumps(record, indent=2, sort_keys=True))
    if not result.success:
        click.echo("no counterfactual within budget", err=True)
        sys.exit(EXIT_NO_COUNTERFACTUAL)
    click.echo(f"flipped at depth {result.depth} "
               f"({100 * result.obfuscation_fraction:.1f}% obfuscated)")


@main.command("bench")
@click.argument("corpus_dir", type=click.Path(exists=True))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True),
              help="JSON config; flags override its fields")
@click.option("--T", "threshold", default=None, type=float)
@click.option("--budget", default=None, type=int)
@click.option("--mask", default=None)
@click.option("--seed", default=None, type=int)
@click.option("--jobs", default=None, type=int)
@click.option("--no-oracle", is_flag=True)
@click.option("--no-random", is_flag=True)
@click.option("--out", "out_dir", default="cse-bench", show_default=True)
def bench(corpus_dir, model_path, config_path, threshold, budget, mask, seed, jobs,
          no_oracle, no_random, out_dir):
    """Run the metric harness over a corpus and write report + figures."""
    cfg = {
        "T": 0.5, "budget": 10, "mask": "means", "seed": 0, "jobs": 1,
        "segmenters": bench_mod.DEFAULT_SEGMENTERS,
        "attributors": list(bench_mod.DEFAULT_ATTRIBUTORS),
        "include_oracle": True, "include_random": True,
    }
    if config_path:
        cfg.update(json.loads(Path(config_path).read_text()))
    for key, val in (("T", threshold), ("budget", budget), ("mask", mask),
                     ("seed", seed), ("jobs", jobs)):
        if val is not None:
            cfg[key] = val
    if no_oracle:
        cfg["include_oracle"] = False
    if no_random:
        cfg["include_random"] = False

    start = time.monotonic()
    report = bench_mod.run_bench(corpus_dir, model_path, cfg)
    bench_mod.write_report(report, out_dir)
    click.echo(bench_mod.report_table(report))
    click.echo(f"done in {time.monotonic() - start:.1f}s -> {out_dir}", err=True)


@main.command()
@click.argument("image_path", type=click.Path(exists=True))
@click.option("--seg", default="bass", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", default="labels.png", show_default=True)
def segment(image_path, seg, seed, out_path):
    """Segment an image; writes a 16-bit label PNG plus a JSON sidecar."""
    view = resize_to_model(load_image(image_path))
    cfg = parse_seg_config(seg)
    labels = bench_mod.segment_with(view, cfg, seed)
    save_labelmap(labels, out_path, {"seed": seed, "method": cfg["method"], "params": cfg})
    click.echo(f"{num_regions(labels)} regions -> {out_path}")


@main.command()
@click.argument("image_path", type=click.Path(exists=True))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--attr", default="fullgrad", show_default=True,
              type=click.Choice(sorted(attribution.METHODS)))
@click.option("--out", "out_path", default="attribution.png", show_default=True)
@click.option("--dump-json", is_flag=True, help="also write raw float values")
def attribute(image_path, model_path, attr, out_path, dump_json):
    """Compute an attribution heatmap for an image."""
    from .weights import load_model

    model = load_model(model_path)
    view = resize_to_model(load_image(image_path))
    amap = attribution.METHODS[attr](model, view)
    json_path = Path(out_path).with_suffix(".json") if dump_json else None
    save_attribution(amap.values, out_path, json_path)
    click.echo(f"{attr} map for class {engine.CLASS_NAMES[amap.target_class]} -> {out_path}")


@main.command("gen-corpus")
@click.argument("out_dir", type=click.Path())
@click.option("--count", default=200, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--unsafe-fraction", default=0.5, show_default=True)
def gen_corpus(out_dir, count, seed, unsafe_fraction):
    """Generate the seeded synthetic planted-patch corpus."""
    manifest = corpus_mod.generate_corpus(out_dir, count, seed, unsafe_fraction)
    n_unsafe = sum(e["label"] for e in manifest["entries"])
    click.echo(f"wrote {count} images ({n_unsafe} unsafe) to {out_dir}")


def entrypoint():
    try:
        main(standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except click.exceptions.Abort:
        sys.exit(1)
    except SystemExit:
        raise
    except CseError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    entrypoint()
