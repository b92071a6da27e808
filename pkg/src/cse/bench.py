"""Benchmark harness: run the counterfactual pipeline over a corpus and
aggregate success rate, average depth, and average obfuscation per
(segmenter, attributor) combination, with an exhaustive-oracle comparison
where the region count permits."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import attribution, engine
from .corpus import load_manifest
from .counterfactual import (brute_force_counterfactual, greedy_counterfactual,
                             region_scores)
from .errors import CseError
from .image_io import load_image, resize_to_model
from .obfuscation import parse_mask_op, render_obfuscated
from .segmentation import bass_segment, grid_segment, num_regions, slic_segment
from .weights import load_model

DEFAULT_SEGMENTERS = {
    "grid": {"method": "grid", "rows": 3, "cols": 3},
    "slic": {"method": "slic", "n_segments": 25, "compactness": 1.0, "iterations": 10},
    "bass": {"method": "bass", "init_components": 8, "alpha": 1.0,
             "gibbs_sweeps": 100, "spatial_weight": 1.0},
}
DEFAULT_ATTRIBUTORS = ("fullgrad", "gradcam")
ORACLE_MAX_REGIONS = 12


def segment_with(image: np.ndarray, config: dict, seed: int) -> np.ndarray:
    method = config["method"]
    if method == "grid":
        return grid_segment(image, config.get("rows", 3), config.get("cols", 3))
    if method == "slic":
        return slic_segment(image, config.get("n_segments", 25),
                            config.get("compactness", 1.0), seed,
                            config.get("iterations", 10))
    if method == "bass":
        return bass_segment(image, config.get("init_components", 8),
                            config.get("alpha", 1.0), None,
                            config.get("gibbs_sweeps", 100), seed,
                            config.get("spatial_weight", 1.0))
    raise CseError(f"unknown segmentation method {method!r}")


def _image_seed(seed: int, index: int) -> int:
    return int(np.random.default_rng([seed, index]).integers(2**31))


def bench_image(model, image: np.ndarray, index: int, cfg: dict) -> dict:
    """All configured pipelines on one model-resolution image."""
    mask_op = parse_mask_op(cfg["mask"])
    pred, _, _ = engine.predict(model, np.transpose(image, (2, 0, 1)))
    record = {"index": index, "flagged": pred == engine.UNSAFE_CLASS, "results": {}}
    if not record["flagged"]:
        return record

    for seg_name, seg_cfg in cfg["segmenters"].items():
        labels = segment_with(image, seg_cfg, _image_seed(cfg["seed"], index))
        k = num_regions(labels)
        oracle_min = None
        if cfg["include_oracle"] and k <= ORACLE_MAX_REGIONS:
            subset = brute_force_counterfactual(model, image, labels, cfg["T"],
                                                cfg["budget"], mask_op)
            oracle_min = len(subset) if subset is not None else -1  # -1: none in budget

        for attr_name in cfg["attributors"]:
            amap = attribution.METHODS[attr_name](model, image)
            scores = region_scores(amap.values, labels)
            res = greedy_counterfactual(model, image, labels, scores, cfg["T"],
                                        cfg["budget"], mask_op)
            record["results"][f"{seg_name}|{attr_name}"] = _summarize(
                res, image, labels, mask_op, model, k, oracle_min)

        if cfg["include_random"]:
            order = np.random.default_rng(
                [cfg["seed"], index, 7]).permutation(k).tolist()
            res = greedy_counterfactual(model, image, labels, None, cfg["T"],
                                        cfg["budget"], mask_op, region_order=order)
            record["results"][f"{seg_name}|random"] = _summarize(
                res, image, labels, mask_op, model, k, oracle_min)
    return record


def _summarize(res, image, labels, mask_op, model, k, oracle_min) -> dict:
    minimal = True
    if res.success:
        rendered = render_obfuscated(image, res, labels, mask_op, model.channel_means)
        outside = ~np.isin(labels, res.masked_region_ids)
        minimal = bool(np.array_equal(rendered[outside], image[outside]))
    return {
        "success": res.success,
        "depth": res.depth,
        "obfuscation_fraction": round(res.obfuscation_fraction, 6),
        "regions": k,
        "minimal_outside_unchanged": minimal,
        "oracle_min": oracle_min,
    }


def _bench_one_path(args):
    model_path, image_path, index, cfg = args
    model = load_model(model_path)
    image = resize_to_model(load_image(image_path))
    return bench_image(model, image, index, cfg)


def run_bench(corpus_dir, model_path, cfg: dict) -> dict:
    """Full cross-product report over the corpus' unsafe-labeled images."""
    corpus_dir = Path(corpus_dir)
    manifest = load_manifest(corpus_dir)
    unsafe_entries = [(i, e) for i, e in enumerate(manifest["entries"]) if e["label"] == 1]
    if not unsafe_entries:
        raise CseError(f"{corpus_dir}: corpus has no unsafe-labeled images")

    payloads = [(str(model_path), str(corpus_dir / e["file"]), i, cfg)
                for i, e in unsafe_entries]
    jobs = cfg.get("jobs", 1)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_bench_one_path, payloads, chunksize=4))
    else:
        model = load_model(model_path)
        records = [bench_image(model, resize_to_model(load_image(p)), i, cfg)
                   for _, p, i, _ in payloads]

    rows = _aggregate(records)
    return {
        "corpus": str(corpus_dir),
        "corpus_size": manifest["count"],
        "unsafe_images": len(unsafe_entries),
        "flagged_images": sum(r["flagged"] for r in records),
        "config": {k: v for k, v in cfg.items() if k != "jobs"},
        "rows": rows,
    }


def _aggregate(records) -> list:
    keys = []
    for r in records:
        for key in r["results"]:
            if key not in keys:
                keys.append(key)
    rows = []
    for key in keys:
        seg, attr = key.split("|")
        entries = [r["results"][key] for r in records if key in r["results"]]
        succ = [e for e in entries if e["success"]]
        both_oracle = [e for e in succ if e["oracle_min"] is not None and e["oracle_min"] > 0]
        row = {
            "segmenter": seg,
            "attributor": attr,
            "n": len(entries),
            "n_success": len(succ),
            "success_pct": round(100.0 * len(succ) / len(entries), 2) if entries else 0.0,
            "avg_depth": round(float(np.mean([e["depth"] for e in succ])), 3) if succ else None,
            "avg_obfuscation_pct": round(100.0 * float(np.mean(
                [e["obfuscation_fraction"] for e in succ])), 2) if succ else None,
            "minimality_violations": sum(not e["minimal_outside_unchanged"] for e in entries),
        }
        if both_oracle:
            row["oracle_avg_min"] = round(float(np.mean([e["oracle_min"] for e in both_oracle])), 3)
            row["greedy_matches_oracle_pct"] = round(100.0 * float(np.mean(
                [e["depth"] == e["oracle_min"] for e in both_oracle])), 2)
        rows.append(row)
    return rows


_CSV_FIELDS = ("segmenter", "attributor", "n", "n_success", "success_pct", "avg_depth",
               "avg_obfuscation_pct", "minimality_violations", "oracle_avg_min",
               "greedy_matches_oracle_pct")


def report_csv(report: dict) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=_CSV_FIELDS, restval="", lineterminator="\n")
    writer.writeheader()
    for row in report["rows"]:
        writer.writerow({k: row.get(k, "") for k in _CSV_FIELDS})
    return buf.getvalue()


def report_table(report: dict) -> str:
    lines = [f"corpus={report['corpus']} unsafe={report['unsafe_images']} "
             f"flagged={report['flagged_images']}"]
    header = f"{'segmenter':<10}{'attributor':<12}{'success%':>9}{'avg depth':>11}{'avg obf%':>10}"
    lines.append(header)
    lines.append("-" * len(header))
    for row in report["rows"]:
        depth = f"{row['avg_depth']:.2f}" if row["avg_depth"] is not None else "-"
        obf = f"{row['avg_obfuscation_pct']:.1f}" if row["avg_obfuscation_pct"] is not None else "-"
        lines.append(f"{row['segmenter']:<10}{row['attributor']:<12}"
                     f"{row['success_pct']:>9.1f}{depth:>11}{obf:>10}")
    return "\n".join(lines) + "\n"


def write_report(report: dict, out_dir) -> None:
    """report.json + report.csv + report.txt + figures/ under out_dir."""
    from . import plots
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    (out_dir / "report.csv").write_text(report_csv(report))
    (out_dir / "report.txt").write_text(report_table(report))
    plots.render_report_figures(report, out_dir / "figures")
