"""Scalable-vector figures for predictions, metrics and runtimes.

All plotting is optional output; the numeric results always live in the
columnar files next to the figures.
"""

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Ellipse

from .predictor import confidence_ellipse


def _draw_graph(ax, graph):
    for edge_id in graph.edge_ids():
        frame = graph.frame(edge_id)
        color = "tab:orange" if graph.edge(edge_id).kind == "crosswalk" else "0.6"
        ax.plot([frame.x0, frame.x1], [frame.y0, frame.y1], color=color,
                linewidth=1.0, zorder=1)
    for goal in graph.goals:
        ax.plot(goal.x, goal.y, marker="*", color="tab:red", markersize=10,
                linestyle="none", zorder=3)


def plot_prediction(graph, tree, path, percentile=0.99, ellipse_every=10):
    """Branch mean paths with confidence ellipses over the road graph."""
    fig, ax = plt.subplots(figsize=(7, 7))
    if graph is not None:
        _draw_graph(ax, graph)
    for branch in tree.branches:
        means = np.asarray(branch.means)
        ax.plot(means[:, 0], means[:, 1], color="tab:blue", linewidth=1.2,
                zorder=2)
        for i in range(0, len(branch.means), max(1, ellipse_every)):
            cov = branch.covs[i][:2, :2]
            major, minor, angle = confidence_ellipse(cov, percentile)
            if major <= 0.0:
                continue
            ax.add_patch(Ellipse(means[i, :2], 2.0 * major, 2.0 * minor,
                                 angle=math.degrees(angle), fill=False,
                                 edgecolor="tab:red", linewidth=0.6, zorder=2))
    root = tree.branches[0]
    ax.plot(root.means[0][0], root.means[0][1], marker="o", color="tab:green",
            zorder=4)
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)


def plot_error_series(series, path, ylabel):
    """Line plot of per-horizon values, one line per method.

    `series` maps method name -> list of (tau, value).
    """
    fig, ax = plt.subplots(figsize=(6, 4))
    for method, points in sorted(series.items()):
        points = sorted(points)
        ax.plot([p[0] for p in points], [p[1] for p in points], marker="o",
                label=method)
    ax.set_xlabel("horizon [steps]")
    ax.set_ylabel(ylabel)
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)


def plot_runtimes(rows, path):
    """Grouped bar chart of mean runtimes on a log scale."""
    methods = sorted({row.method for row in rows})
    taus = sorted({row.tau for row in rows})
    fig, ax = plt.subplots(figsize=(6, 4))
    width = 0.8 / max(1, len(methods))
    for j, method in enumerate(methods):
        means = [next((r.mean_s for r in rows
                       if r.method == method and r.tau == tau), float("nan"))
                 for tau in taus]
        offsets = np.arange(len(taus)) + (j - 0.5 * (len(methods) - 1)) * width
        ax.bar(offsets, means, width=width, label=method)
    ax.set_yscale("log")
    ax.set_xticks(np.arange(len(taus)), [str(t) for t in taus])
    ax.set_xlabel("horizon [steps]")
    ax.set_ylabel("mean runtime [s]")
    ax.legend()
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
