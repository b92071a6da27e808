"""Matplotlib figures for bench reports (written to files, never shown)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def render_report_figures(report: dict, fig_dir) -> list:
    """Success-rate bars and depth/obfuscation bars; returns written paths."""
    fig_dir = Path(fig_dir)
    fig_dir.mkdir(parents=True, exist_ok=True)
    rows = report["rows"]
    labels = [f"{r['segmenter']}\n{r['attributor']}" for r in rows]
    written = []

    fig, ax = plt.subplots(figsize=(1.2 * max(len(rows), 4), 4))
    ax.bar(labels, [r["success_pct"] for r in rows], color="#4878a8")
    ax.set_ylabel("counterfactual success (%)")
    ax.set_ylim(0, 100)
    ax.set_title("Success rate by segmenter / attribution method")
    fig.tight_layout()
    path = fig_dir / "success_rate.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    fig, axes = plt.subplots(1, 2, figsize=(1.6 * max(len(rows), 4), 4))
    depths = [r["avg_depth"] if r["avg_depth"] is not None else 0 for r in rows]
    obfs = [r["avg_obfuscation_pct"] if r["avg_obfuscation_pct"] is not None else 0
            for r in rows]
    axes[0].bar(labels, depths, color="#6aa06a")
    axes[0].set_ylabel("avg depth (successes)")
    axes[1].bar(labels, obfs, color="#b0726a")
    axes[1].set_ylabel("avg obfuscation % (successes)")
    for ax in axes:
        ax.tick_params(axis="x", labelsize=7)
    fig.tight_layout()
    path = fig_dir / "depth_obfuscation.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)
    return written
