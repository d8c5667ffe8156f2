"""Run reports: a delimited summary table plus rendered figures.

Each planning run writes report.csv alongside one regrasp-graph figure per
object and a phase-timing chart. Figures go through the Agg backend so the
CLI works headless.
"""

import csv
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

TIMING_COLUMNS = ("grasps", "placements", "ik_cd_init", "ik_cd_regrasp",
                  "ik_cd_goal", "graph_search")

TIMING_HEADERS = ("Grasps", "Placements", "IK,CD(init)", "IK,CD(regrasp)",
                  "IK,CD(goal)", "Graph search")

CSV_FIELDS = ("object", "status", "error", "keyframes", "regrasp_count",
              "nodes", "l1_edges", "l2_edges") + TIMING_COLUMNS


def write_report(out_dir, rows):
    """Write report.csv from per-object result rows; returns its path."""
    path = os.path.join(out_dir, "report.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in CSV_FIELDS})
    return path


def format_timing_table(rows):
    """Column-aligned phase-time table, one row per object, seconds."""
    header = ("object",) + TIMING_HEADERS
    body = []
    for row in rows:
        body.append((str(row.get("object", "")),)
                    + tuple(f"{row.get(col, 0) or 0:.3f}" for col in TIMING_COLUMNS))
    widths = [max(len(header[i]), *(len(b[i]) for b in body)) if body else len(header[i])
              for i in range(len(header))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    for b in body:
        lines.append("  ".join(c.ljust(w) for c, w in zip(b, widths)))
    return "\n".join(lines)


def _circle_layout(n):
    angles = 2.0 * np.pi * np.arange(n) / max(n, 1) + np.pi / 2.0
    return np.column_stack([np.cos(angles), np.sin(angles)])


_KIND_COLORS = {"start": "tab:blue", "goal": "tab:red", "intermediate": "gold"}


def render_graph_figure(graph, path_nodes, out_path):
    """Draw both graph layers side by side and save a PNG."""
    pos = _circle_layout(len(graph.nodes))
    path_edges = {tuple(sorted(e)) for e in zip(path_nodes, path_nodes[1:])}

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 5))
    for ax, title in ((ax1, "layer 1: placement connectivity"),
                      (ax2, "layer 2: shared grasps per edge")):
        ax.set_title(title)
        ax.set_aspect("equal")
        ax.axis("off")

    for (i, j) in sorted(graph.layer1_edges):
        on_path = (i, j) in path_edges
        ax1.plot(pos[[i, j], 0], pos[[i, j], 1],
                 color="tab:green" if on_path else "0.6",
                 lw=2.5 if on_path else 1.0, zorder=1)
        count = len(graph.layer2_edges[(i, j)])
        ax2.plot(pos[[i, j], 0], pos[[i, j], 1], color="0.4",
                 lw=0.5 + 0.5 * count, zorder=1)
        mid = pos[[i, j]].mean(axis=0)
        ax2.annotate(str(count), mid, fontsize=8, ha="center", va="center",
                     bbox=dict(boxstyle="circle", fc="white", ec="0.7"))

    for ax in (ax1, ax2):
        for node in graph.nodes:
            ax.scatter(*pos[node.id], s=260, color=_KIND_COLORS[node.kind],
                       edgecolors="k", zorder=2)
            ax.annotate(str(node.id), pos[node.id], ha="center", va="center",
                        fontsize=9, zorder=3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def render_timing_figure(rows, out_path):
    """Stacked horizontal bars of phase times, one bar per object."""
    labels = [str(row.get("object", "")) for row in rows]
    data = np.array([[float(row.get(col, 0) or 0) for col in TIMING_COLUMNS]
                     for row in rows])
    fig, ax = plt.subplots(figsize=(8, 1.2 + 0.6 * max(len(rows), 1)))
    left = np.zeros(len(rows))
    for k, name in enumerate(TIMING_HEADERS):
        ax.barh(labels, data[:, k], left=left, label=name)
        left += data[:, k]
    ax.set_xlabel("seconds")
    ax.legend(fontsize=8, ncol=2)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
