"""SVG figures: learning curves with mean +- std bands and selection overlays."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .harness import CurvePoint, Selection, read_curve


def collect_curves(results_dir: Path) -> dict[str, dict[int, list[CurvePoint]]]:
    """All curve.csv files below ``results_dir`` grouped by method then seed."""
    out: dict[str, dict[int, list[CurvePoint]]] = {}
    for path in sorted(Path(results_dir).rglob("curve.csv")):
        pts = read_curve(path)
        if not pts:
            continue
        method = pts[0].method or path.parent.parent.name
        out.setdefault(method, {})[pts[0].seed] = pts
    return out


def curve_bands(curves: dict[int, list[CurvePoint]], x: str = "iteration"):
    """(x values, mean, std) per iteration; std is zero for a single seed."""
    runs = [curves[s] for s in sorted(curves)]
    n = min(len(r) for r in runs)
    e = np.array([[p.rmse for p in r[:n]] for r in runs])
    xs = np.array([[getattr(p, x) for p in r[:n]] for r in runs], dtype=float).mean(axis=0)
    std = e.std(axis=0, ddof=1) if len(runs) > 1 else np.zeros(n)
    return xs, e.mean(axis=0), std


def plot_curves(results: dict[str, dict[int, list[CurvePoint]]], out_file: Path, x: str = "iteration",
                title: str | None = None):
    if not results:
        raise ValueError("no curves to plot")
    fig, ax = plt.subplots(figsize=(6, 4))
    for method in sorted(results):
        xs, mean, std = curve_bands(results[method], x)
        (line,) = ax.plot(xs, mean, marker="o", ms=3, label=method)
        if len(results[method]) > 1:
            ax.fill_between(xs, mean - std, mean + std, color=line.get_color(), alpha=0.2, linewidth=0)
    ax.set_xlabel({"iteration": "iteration", "solver_time": "cumulative solver time (s)",
                   "queries": "solver queries"}.get(x, x))
    ax.set_ylabel("test RMSE")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_file, format="svg")
    return fig


def plot_selections(inputs: list[np.ndarray], selections: list[Selection], coords: np.ndarray, out_file: Path):
    """Input fields with one tick per selected node (1D problems)."""
    if not selections:
        raise ValueError("no selections to plot")
    fig, axes = plt.subplots(len(selections), 1, figsize=(6, 1.8 * len(selections)), squeeze=False)
    for ax, x, sel in zip(axes[:, 0], inputs, selections):
        ax.plot(coords, x, color="0.3", lw=1)
        idx = np.asarray(sel.indices)
        ax.vlines(coords[idx], 0, 1, transform=ax.get_xaxis_transform(), colors="C3", lw=0.8, label="selected")
        ax.set_ylabel(f"id {sel.instance_id}", fontsize=8)
    axes[-1, 0].set_xlabel("x")
    fig.tight_layout()
    fig.savefig(out_file, format="svg")
    return fig
