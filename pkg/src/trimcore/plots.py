"""SVG figure rendering for benchmark output.

Headless (Agg) rendering with a fixed hash salt, so figure files are stable
across reruns of the same results.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "trimcore"

import matplotlib.pyplot as plt

__all__ = ["plot_metric_by_size", "plot_dynamic_series"]


def _save(fig, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_metric_by_size(rows: list[dict], metric: str, path: str | Path, title: str) -> None:
    """One line per method: metric versus coreset size."""
    methods = sorted({r["method"] for r in rows})
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for method in methods:
        pts = sorted(
            (int(r["size"]), float(r[metric])) for r in rows if r["method"] == method
        )
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=method)
    ax.set_xlabel("coreset size |C|")
    ax.set_ylabel(metric)
    ax.set_title(title)
    if metric == "loss_ratio":
        ax.axhline(1.0, color="gray", lw=0.8, ls="--")
    ax.legend()
    fig.tight_layout()
    _save(fig, path)


def plot_dynamic_series(series: list[dict], path: str | Path) -> None:
    """Per-height mean raw points touched per update, plus timing when present."""
    heights = sorted({int(r["h"]) for r in series})
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    touched = []
    for h in heights:
        vals = [float(r["raw_points_touched"]) for r in series if int(r["h"]) == h]
        touched.append(sum(vals) / max(1, len(vals)))
    axes[0].plot(heights, touched, marker="o")
    axes[0].set_xlabel("tree height h")
    axes[0].set_ylabel("mean raw points touched / op")
    axes[0].set_title("maintenance work vs height")
    for h in heights:
        rows = [r for r in series if int(r["h"]) == h and r.get("t_solve_full")]
        if not rows:
            continue
        xs = [int(r["op_index"]) for r in rows]
        ratio = [
            float(r["t_solve_full"]) / max(1e-12, float(r["t_maintain_cum"]) + float(r["t_solve_coreset"]))
            for r in rows
        ]
        axes[1].plot(xs, ratio, marker=".", label=f"h={h}")
    axes[1].set_xlabel("operation index")
    axes[1].set_ylabel("full re-solve / (maintain+solve)")
    axes[1].set_title("dynamic speedup")
    if axes[1].lines:
        axes[1].legend(fontsize=7)
    fig.tight_layout()
    _save(fig, path)
