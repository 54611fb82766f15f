"""SVG figures rendered purely from the raw CSVs of a result directory."""
from __future__ import annotations

import csv
import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .experiment import SELECTION_HEADER, SchemaError  # noqa: E402

HISTORY_HEADER = ["round", "phase", "target", "shd", "samples_used"]
# fixed salt and no date stamp so unchanged CSVs give byte-identical SVGs
SVG_RC = {"svg.hashsalt": "activecausal", "svg.fonttype": "none"}


def _load(path: Path, required: list) -> list[dict]:
    text = path.read_text()
    header = next(csv.reader(io.StringIO(text)), [])
    missing = [c for c in required if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}")
    return list(csv.DictReader(io.StringIO(text)))


def _save(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def shd_band(curves: list[list[int]]):
    """Mean curve and min/max envelope over seeds; shorter runs hold their last value."""
    if not curves or not any(curves):
        return np.array([]), np.array([]), np.array([]), np.array([])
    length = max(len(c) for c in curves)
    mat = np.array([c + [c[-1]] * (length - len(c)) for c in curves if c], dtype=float)
    return np.arange(1, length + 1), mat.mean(axis=0), mat.min(axis=0), mat.max(axis=0)


def plot_shd_curves(result_dir, out_path) -> Path:
    d = Path(result_dir)
    curves = [[int(r["shd"]) for r in _load(p, HISTORY_HEADER)]
              for p in sorted(d.glob("seed*_history.csv"))]
    x, mean, lo, hi = shd_band(curves)
    with plt.rc_context(SVG_RC):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        if len(x):
            ax.fill_between(x, lo, hi, alpha=0.25, linewidth=0)
            ax.plot(x, mean)
        ax.set_xlabel("structural round")
        ax.set_ylabel("SHD")
        return _save(fig, Path(out_path))


def plot_selection(result_dir, out_path) -> Path:
    rows = _load(Path(result_dir) / "selection.csv", SELECTION_HEADER)
    n = 1 + max((int(r["node"]) for r in rows), default=-1)
    hist = np.zeros(n)
    for r in rows:
        hist[int(r["node"])] += int(r["count"])
    with plt.rc_context(SVG_RC):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        if n:
            ax.bar(np.arange(n), hist)
            ax.set_xticks(np.arange(n))
        ax.set_xlabel("intervened node")
        ax.set_ylabel("times selected")
        return _save(fig, Path(out_path))


def plot_edge_dynamics(adjacency_csv, out_path) -> Path:
    path = Path(adjacency_csv)
    rows = _load(path, ["round"])
    cols = [c for c in (rows[0].keys() if rows else []) if c != "round"]
    with plt.rc_context(SVG_RC):
        fig, ax = plt.subplots(figsize=(6, 4))
        if rows and cols:
            mat = np.array([[float(r[c]) for c in cols] for r in rows]).T
            im = ax.imshow(mat, aspect="auto", vmin=0.0, vmax=1.0, interpolation="nearest")
            ax.set_yticks(np.arange(len(cols)))
            ax.set_yticklabels(cols, fontsize=5)
            fig.colorbar(im, ax=ax, label="edge belief")
        ax.set_xlabel("structural round")
        return _save(fig, Path(out_path))


def emit_plots(result_dir) -> list[Path]:
    """Write shd.svg, selection.svg and edges_seed<S>.svg next to the CSVs."""
    d = Path(result_dir)
    written = [plot_shd_curves(d, d / "shd.svg")]
    if (d / "selection.csv").is_file():
        written.append(plot_selection(d, d / "selection.svg"))
    for adj in sorted(d.glob("seed*_adjacency.csv")):
        seed = adj.name[len("seed"):-len("_adjacency.csv")]
        written.append(plot_edge_dynamics(adj, d / f"edges_seed{seed}.svg"))
    return written
