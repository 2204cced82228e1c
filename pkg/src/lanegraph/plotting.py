"""Vector figures of minimaps with predicted lane graphs, plus metric charts.

SVG output is byte-stable: the id salt is fixed and no date is embedded.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import FancyArrowPatch, Polygon  # noqa: E402

from .geometry import PolylineKind  # noqa: E402

SVG_SALT = "lanegraph"
PAIR_COLOR = "tab:orange"
EDGE_COLOR = "tab:blue"


def _svg_rc():
    return {"svg.hashsalt": SVG_SALT, "svg.fonttype": "none", "path.simplify": False}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fmt = path.suffix.lstrip(".").lower() or "svg"
    meta = {"Date": None} if fmt == "svg" else ({"Software": None} if fmt == "png" else None)
    fig.savefig(path, format=fmt, metadata=meta)
    plt.close(fig)
    return path


def lane_pair_polygons(pairs) -> list:
    """A thin box spanning the lane for every pair; queries carry no order,
    so consecutive pairs are not joined."""
    polys = []
    for p in np.asarray(pairs, dtype=float).reshape(-1, 4):
        l, r = p[:2], p[2:]
        w = r - l
        n = np.array([-w[1], w[0]])
        n = 0.6 * n / (np.linalg.norm(n) or 1.0)
        polys.append(np.array([l - n, l + n, r + n, r - n]))
    return polys


def emit_plots(minimap, pairs=None, adjacency=None, path="minimap.svg", show_gt: bool = True,
               title: str | None = None):
    """Draw traces, observations, predicted lane pairs and connectivity.

    ``pairs`` is (Q, 4); pair ``i`` becomes the polygon with gid
    ``lanepair_i`` and edge ``i -> j`` the arrow with gid ``edge_i_j``.
    """
    with plt.rc_context(_svg_rc()):
        fig, ax = plt.subplots(figsize=(6, 6))
        for p in minimap.polylines:
            if p.kind is PolylineKind.TRACE:
                ax.plot(p.points[:, 0], p.points[:, 1], color="0.6", lw=0.6, zorder=1)
            else:
                ax.plot(p.points[:, 0], p.points[:, 1], color="k", lw=0.9, zorder=2)
        if show_gt:
            for g in minimap.gt_pairs:
                if g is not None:
                    ax.plot([g.left[0], g.right[0]], [g.left[1], g.right[1]], color="tab:green",
                            lw=0.8, ls="--", zorder=3)
        centers = np.array([c.position for c in minimap.centers]).reshape(-1, 2)
        if pairs is not None:
            for i, poly in enumerate(lane_pair_polygons(pairs)):
                patch = Polygon(poly, closed=True, facecolor=PAIR_COLOR, edgecolor=PAIR_COLOR, alpha=0.6, zorder=4)
                patch.set_gid(f"lanepair_{i}")
                ax.add_patch(patch)
        if adjacency is not None:
            A = np.asarray(adjacency)
            for i, j in zip(*np.nonzero(A)):
                arrow = FancyArrowPatch(centers[i], centers[j], arrowstyle="-|>", mutation_scale=8,
                                        color=EDGE_COLOR, lw=1.0, zorder=5)
                arrow.set_gid(f"edge_{i}_{j}")
                ax.add_patch(arrow)
        if len(centers):
            ax.scatter(centers[:, 0], centers[:, 1], s=6, color="tab:red", zorder=6)
        ax.set_aspect("equal")
        ax.set_title(title or f"tile {tuple(minimap.tile_id)} ({minimap.odd})", fontsize=9)
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        fig.tight_layout()
        return _save(fig, path)


def plot_metric_bars(report, path, metrics=("mlwe", "conn_f1")):
    """One panel per metric; grouped bars per ODD and method."""
    with plt.rc_context(_svg_rc()):
        fig, axes = plt.subplots(1, len(metrics), figsize=(4.5 * len(metrics), 3.5))
        axes = np.atleast_1d(axes)
        odds = list(dict.fromkeys(r.odd for r in report.rows))
        for ax, metric in zip(axes, metrics):
            methods = [m for m in dict.fromkeys(r.method for r in report.rows)
                       if any(not math.isnan(getattr(r, metric)) for r in report.rows if r.method == m)]
            width = 0.8 / max(len(odds), 1)
            for k, odd in enumerate(odds):
                vals = []
                for m in methods:
                    try:
                        vals.append(getattr(report.get(odd, m), metric))
                    except KeyError:
                        vals.append(math.nan)
                ax.bar(np.arange(len(methods)) + k * width, vals, width, label=odd)
            ax.set_xticks(np.arange(len(methods)) + 0.4 - width / 2)
            ax.set_xticklabels(methods)
            ax.set_title(metric)
            ax.legend(fontsize=7)
        fig.tight_layout()
        return _save(fig, path)


def plot_training_curve(history, path):
    with plt.rc_context(_svg_rc()):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ep = [h["epoch"] for h in history]
        for key in ("train_loss", "train_boundary", "train_connectivity", "val_loss"):
            if history and key in history[0]:
                ax.plot(ep, [h[key] for h in history], label=key)
        ax.set_yscale("log")
        ax.set_xlabel("epoch")
        ax.set_ylabel("loss")
        ax.legend(fontsize=7)
        fig.tight_layout()
        return _save(fig, path)
