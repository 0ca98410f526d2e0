"""Optimality gap curves from trace files, written as SVG."""
import os
from collections import defaultdict

import numpy as np

from ..exceptions import PlotError
from .io import parse_trace_filename, read_trace

__all__ = ["emit_plot", "collect_traces", "median_band"]

_XLABEL = {"sfo": "SFO calls", "time": "wall time (s)"}


def collect_traces(paths):
    """Expand directories and group trace files by ``(method, eta0)``."""
    files = []
    for p in paths:
        if os.path.isdir(p):
            files += [os.path.join(p, f) for f in sorted(os.listdir(p)) if f.endswith(".jsonl")]
        else:
            files.append(p)
    groups = defaultdict(list)
    for f in files:
        method, eta, _ = parse_trace_filename(f)
        rows = read_trace(f)
        if not rows:
            raise PlotError(f"empty trace: {f}")
        groups[(method, eta)].append(rows)
    return dict(sorted(groups.items()))


def median_band(runs, axis="sfo"):
    """Median and IQR of the gap across runs on a shared grid.

    Runs are compared on the x-values of the first run; each run is sampled
    as a step function (last logged value at or before x). For ``time`` the
    grid is the union of all runs' logged times.
    """
    key = "sfo" if axis == "sfo" else "sec"
    if axis == "sfo":
        grid = np.array([r[key] for r in runs[0]], dtype=float)
    else:
        grid = np.unique(np.concatenate([[r[key] for r in run] for run in runs]).astype(float))
    vals = []
    for run in runs:
        xs = np.array([r[key] for r in run], dtype=float)
        gs = np.array([r["gap"] for r in run], dtype=float)
        idx = np.clip(np.searchsorted(xs, grid, side="right") - 1, 0, len(xs) - 1)
        vals.append(gs[idx])
    vals = np.array(vals)
    lo, med, hi = np.percentile(vals, [25, 50, 75], axis=0)
    return grid, med, lo, hi


def emit_plot(paths, x_axis="sfo", out="gap.svg", title=None):
    """Plot median gap (log scale) with a shaded IQR per (method, eta0).

    Returns ``(out, series_labels, xlabel)``.

    Raises
    ------
    PlotError
        If no traces are given or any trace is empty.
    """
    if x_axis not in _XLABEL:
        raise PlotError(f"x axis must be 'sfo' or 'time', got {x_axis!r}")
    if not paths:
        raise PlotError("no trace files given")
    groups = collect_traces(paths)
    if not groups:
        raise PlotError("no trace files found")

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # fixed hash salt keeps the svg byte-stable; real <text> keeps labels searchable
    with matplotlib.rc_context({"svg.hashsalt": "rsrm", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        labels = []
        for (method, eta), runs in groups.items():
            x, med, lo, hi = median_band(runs, x_axis)
            # gaps can touch zero or dip below by round-off; keep them plottable
            floor = 1e-16
            label = f"{method} (eta0={eta:g})"
            (line,) = ax.plot(x, np.maximum(med, floor), label=label)
            ax.fill_between(x, np.maximum(lo, floor), np.maximum(hi, floor), color=line.get_color(), alpha=0.2, lw=0)
            labels.append(label)
        ax.set_yscale("log")
        ax.set_xlabel(_XLABEL[x_axis])
        ax.set_ylabel("optimality gap")
        if title:
            ax.set_title(title)
        ax.legend(fontsize="small")
        fig.tight_layout()
        fig.savefig(out, format="svg", metadata={"Date": None})
        plt.close(fig)
    return out, labels, _XLABEL[x_axis]
