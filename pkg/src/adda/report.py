"""Plots of per-epoch sampling dynamics from a metrics CSV."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import FormatError  # noqa: E402

PLOTS = ("probabilities.svg", "p_std.svg", "accuracy.svg")


def _float(text, row, column):
    if text == "":
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise FormatError(f"row {row}: column {column!r} is not a number: {text!r}") from None


def read_metrics(path):
    """Parse a metrics CSV into ``{"epoch": array, "p": (E, N) array, ...}``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"row 1: {path} is empty, expected a header")
    header = rows[0]
    if not header or header[0] != "epoch":
        raise FormatError(f"row 1: header must start with 'epoch', got {header[:1]}")
    n = sum(1 for col in header if col.startswith("p_") and col != "p_std")
    if n == 0 or not all(col in header for col in ("total_loss", "p_std")):
        raise FormatError("row 1: header lacks per-composition or summary columns")
    if len(rows) < 2:
        raise FormatError(f"row 2: {path} has a header but no epoch rows")
    data = []
    for number, row in enumerate(rows[1:], 2):
        if len(row) != len(header):
            raise FormatError(f"row {number}: expected {len(header)} fields, got {len(row)}")
        data.append([_float(value, number, col) for value, col in zip(row, header)])
    table = np.array(data)

    def block(prefix):
        return table[:, [header.index(f"{prefix}_{i}") for i in range(n)]]

    return {
        "epoch": table[:, 0],
        "comp_id": block("comp_id")[0].astype(int),
        "p": block("p"),
        "score": block("score"),
        "size": block("size"),
        "acc": block("acc"),
        "mean_loss": block("mean_loss"),
        "total_loss": table[:, header.index("total_loss")],
        "p_std": table[:, header.index("p_std")],
    }


def _per_composition(ax, epochs, values, comp_ids, ylabel):
    for i, cid in enumerate(comp_ids):
        ax.plot(epochs, values[:, i], marker="o", markersize=3, label=f"composition {cid}")
    ax.set_xlabel("epoch")
    ax.set_ylabel(ylabel)
    ax.legend(fontsize="small")


def render_report(metrics_path, out_dir):
    """Write the three SVG plots into ``out_dir``; returns their paths."""
    m = read_metrics(metrics_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [out_dir / name for name in PLOTS]

    fig, ax = plt.subplots(figsize=(6, 4))
    _per_composition(ax, m["epoch"], m["p"], m["comp_id"], "sampling probability")
    fig.tight_layout()
    fig.savefig(paths[0])
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(m["epoch"], m["p_std"], marker="o", markersize=3)
    ax.set_xlabel("epoch")
    ax.set_ylabel("std of sampling probability")
    fig.tight_layout()
    fig.savefig(paths[1])
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 4))
    _per_composition(ax, m["epoch"], m["acc"], m["comp_id"], "pretext accuracy")
    fig.tight_layout()
    fig.savefig(paths[2])
    plt.close(fig)
    return paths
