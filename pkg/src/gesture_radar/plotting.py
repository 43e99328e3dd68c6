"""PNG renderings of the CSV artifacts (confusion matrix, features, profiles, training history).

Figures are drawn on the Agg canvas directly, so importing this module never
touches the global pyplot state or needs a display.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .core import CLASS_NAMES, FEATURE_NAMES, GESTURES, GestureClass

STYLE = {
    "font.family": "DejaVu Sans",
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "legend.fontsize": 8,
    "lines.linewidth": 1.0,
    "savefig.dpi": 120,
    "savefig.bbox": "tight",
    "image.cmap": "viridis",
}

_UNITS = {"range": "m", "velocity": "m/s", "azimuth": "rad", "elevation": "rad", "magnitude": "a.u."}


def _figure(**kwargs) -> Figure:
    fig = Figure(**kwargs)
    FigureCanvasAgg(fig)
    return fig


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # no timestamp or version in the metadata, so reruns give identical files
    fig.savefig(path, format="png", metadata={"Software": None})
    return path


def plot_confusion(report, path, title: str | None = None) -> Path:
    """Counts with reference classes down and predictions (plus misses) across."""
    with matplotlib.rc_context(STYLE):
        counts = np.asarray(report.confusion)
        fig = _figure(figsize=(5.2, 4.4))
        ax = fig.add_subplot()
        rows = [CLASS_NAMES[c] for c in GestureClass]
        cols = [CLASS_NAMES[c] for c in GESTURES] + ["Missed"]
        # row-normalised colours, raw counts as text
        norm = counts / np.maximum(counts.sum(axis=1, keepdims=True), 1)
        ax.imshow(norm, vmin=0, vmax=1, cmap="Blues")
        for i in range(counts.shape[0]):
            for j in range(counts.shape[1]):
                ax.text(j, i, str(counts[i, j]), ha="center", va="center", color="white" if norm[i, j] > 0.5 else "black")
        ax.set_xticks(range(len(cols)), cols, rotation=45, ha="right")
        ax.set_yticks(range(len(rows)), rows)
        ax.set_xlabel("predicted")
        ax.set_ylabel("reference")
        if title:
            ax.set_title(title)
        return _save(fig, path)


def plot_features(features, path, labels=None, frame_rate: float = 33.3) -> Path:
    """Five stacked feature traces; non-background label runs are shaded."""
    features = np.asarray(features)
    t = np.arange(len(features)) / frame_rate
    with matplotlib.rc_context(STYLE):
        fig = _figure(figsize=(6.0, 6.0))
        axes = fig.subplots(len(FEATURE_NAMES), 1, sharex=True)
        for k, (ax, name) in enumerate(zip(axes, FEATURE_NAMES)):
            ax.plot(t, features[:, k], color="C0")
            ax.set_ylabel(f"{name}\n[{_UNITS[name]}]")
            if labels is not None:
                _shade_labels(ax, np.asarray(labels), frame_rate)
        axes[-1].set_xlabel("time [s]")
        return _save(fig, path)


def _shade_labels(ax, labels, frame_rate):
    fg = labels != int(GestureClass.BACKGROUND)
    edges = np.flatnonzero(np.diff(np.concatenate([[0], fg.astype(int), [0]])))
    for start, stop in zip(edges[::2], edges[1::2]):
        ax.axvspan(start / frame_rate, stop / frame_rate, color=f"C{int(labels[start]) + 1}", alpha=0.25, lw=0)


def plot_profiles(profiles, path, range_resolution: float, frame_rate: float = 33.3, ranges=None) -> Path:
    """Integrated range profile over time, with the detected range on top."""
    profiles = np.asarray(profiles)
    T, N = profiles.shape
    with matplotlib.rc_context(STYLE):
        fig = _figure(figsize=(6.0, 3.2))
        ax = fig.add_subplot()
        extent = (0, T / frame_rate, 0, N * range_resolution)
        im = ax.imshow(profiles.T, origin="lower", aspect="auto", extent=extent)
        if ranges is not None:
            ax.plot((np.arange(T) + 0.5) / frame_rate, np.asarray(ranges) + range_resolution / 2, "w.", ms=2)
        ax.set_xlabel("time [s]")
        ax.set_ylabel("range [m]")
        fig.colorbar(im, ax=ax, label="integrated magnitude")
        return _save(fig, path)


def plot_history(history, path) -> Path:
    """Training loss and validation frame accuracy per epoch."""
    history = np.asarray(history, dtype=float)
    with matplotlib.rc_context(STYLE):
        fig = _figure(figsize=(5.0, 3.0))
        ax = fig.add_subplot()
        ax.plot(history[:, 0], history[:, 1], color="C0", label="train loss")
        ax.set_xlabel("epoch")
        ax.set_ylabel("cross-entropy")
        ax2 = ax.twinx()
        ax2.plot(history[:, 0], history[:, 2], color="C1", label="val accuracy")
        ax2.set_ylabel("frame accuracy")
        fig.legend(loc="upper center", ncols=2, frameon=False)
        return _save(fig, path)
