"""Report figures.

Figures are built on bare ``Figure`` objects with the Agg canvas (no pyplot
state), and saved without metadata so reruns produce identical bytes.
"""

from __future__ import annotations

import matplotlib
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

import numpy as np

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
    "svg.hashsalt": "augkit",
}

GOLDEN = (np.sqrt(5) - 1.0) / 2.0


def new_figure(width: float = 5.0, height: float | None = None):
    fig = Figure(figsize=(width, height or width * GOLDEN))
    FigureCanvasAgg(fig)
    return fig, fig.add_subplot(1, 1, 1)


def save(fig, path) -> None:
    with matplotlib.rc_context(STYLE):
        fig.tight_layout()
        fig.savefig(path, metadata={"Software": None})


def similarity_histogram(similarities, retained, threshold, path, title="Cosine similarity of converted speech"):
    similarities = np.asarray(similarities, dtype=float)
    retained = np.asarray(retained, dtype=bool)
    with matplotlib.rc_context(STYLE):
        fig, ax = new_figure()
        bins = np.linspace(-1.0, 1.0, 41)
        ax.hist(similarities[retained], bins=bins, color="tab:blue", alpha=0.8, label=f"retained ({retained.sum()})")
        ax.hist(similarities[~retained], bins=bins, color="tab:gray", alpha=0.8,
                label=f"rejected ({(~retained).sum()})")
        if threshold is not None:
            ax.axvline(threshold, color="k", lw=1, ls="--")
        ax.set_xlabel("cosine similarity to target centroid")
        ax.set_ylabel("utterances")
        ax.set_title(title)
        ax.legend(frameon=False)
    save(fig, path)


def score_histogram(scores, labels, path, threshold=None, title=""):
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    with matplotlib.rc_context(STYLE):
        fig, ax = new_figure()
        lo, hi = float(scores.min()), float(scores.max())
        bins = np.linspace(lo, hi if hi > lo else lo + 1e-6, 41)
        ax.hist(scores[~labels], bins=bins, density=True, alpha=0.6, color="tab:red", label="non-target")
        ax.hist(scores[labels], bins=bins, density=True, alpha=0.6, color="tab:green", label="target")
        if threshold is not None and np.isfinite(threshold):
            ax.axvline(threshold, color="k", lw=1, ls="--", label="EER threshold")
        ax.set_xlabel("cosine score")
        ax.set_ylabel("density")
        ax.set_title(title)
        ax.legend(frameon=False)
    save(fig, path)


def condition_bars(names, eers, mdcfs, path):
    with matplotlib.rc_context(STYLE):
        fig, ax = new_figure(width=max(4.0, 1.2 * len(names) + 2))
        x = np.arange(len(names))
        ax.bar(x - 0.2, 100 * np.asarray(eers), width=0.4, color="tab:blue", label="EER [%]")
        ax2 = ax.twinx()
        ax2.bar(x + 0.2, mdcfs, width=0.4, color="tab:orange", label="minDCF")
        ax.set_xticks(x)
        ax.set_xticklabels(names, rotation=20, ha="right")
        ax.set_ylabel("EER [%]")
        ax2.set_ylabel("minDCF")
        handles = ax.get_legend_handles_labels()[0] + ax2.get_legend_handles_labels()[0]
        ax.legend(handles, [h.get_label() for h in handles], frameon=False, loc="upper right")
    save(fig, path)
