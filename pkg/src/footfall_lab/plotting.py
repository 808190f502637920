"""Report figures written next to the CSV outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (8.0, 4.5),
    "figure.dpi": 100,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "savefig.bbox": "tight",
}

CODE_COLORS = {-1: "0.75", 0: "tab:gray", 1: "tab:blue", 2: "tab:orange"}
CODE_LABELS = {-1: "not significant", 0: "balanced", 1: "a -> b", 2: "b -> a"}


def _save(fig, path):
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_footfall(series, path, max_series=8):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for s in list(series)[:max_series]:
            hours = np.arange(len(s)) * s.step / 3600.0
            ax.plot(hours, s.values, lw=0.8, label=s.sensor_id)
        ax.set_xlabel("hours since series start")
        ax.set_ylabel("footfall per interval")
        ax.legend(ncol=4)
        return _save(fig, path)


def plot_decomposition(dec, path, title=""):
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(4, 1, sharex=True, figsize=(8.0, 7.0))
        x = np.arange(dec.observed.size)
        for ax, values, label in zip(
            axes, (dec.observed, dec.trend, dec.seasonal, dec.residual), ("observed", "trend", "seasonal", "residual")
        ):
            ax.plot(x, values, lw=0.8)
            ax.set_ylabel(label)
        axes[0].set_title(title or f"additive decomposition, period {dec.period}")
        axes[-1].set_xlabel("slot")
        return _save(fig, path)


def plot_flow_codes(rows, path):
    """Daily direction code per pair, one row of markers per pair."""
    pairs = sorted({r.pair_id for r, _ in rows})
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(8.0, max(2.0, 0.35 * len(pairs) + 1.0)))
        for code, color in CODE_COLORS.items():
            pts = [(r.day, pairs.index(r.pair_id)) for r, c in rows if int(c) == code]
            if pts:
                days, ys = zip(*pts)
                ax.scatter(days, ys, s=14, marker="s", color=color, label=CODE_LABELS[code])
        ax.set_yticks(range(len(pairs)))
        ax.set_yticklabels(pairs)
        ax.set_xlabel("day")
        ax.legend(loc="upper left", bbox_to_anchor=(1.0, 1.0))
        fig.autofmt_xdate()
        return _save(fig, path)


def plot_quadrants(points, path, center=(150.0, 0.5)):
    """Scatter of daily correlation against walking time, split at ``center``."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if points:
            t, c = zip(*points)
            ax.scatter(t, c, s=6, alpha=0.5)
        ax.axvline(center[0], color="k", lw=0.8)
        ax.axhline(center[1], color="k", lw=0.8)
        ax.set_xlabel("walking time (s)")
        ax.set_ylabel("Pearson correlation")
        ax.set_ylim(-1.05, 1.05)
        return _save(fig, path)
