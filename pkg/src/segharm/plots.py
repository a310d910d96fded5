"""Figure rendering for run reports.

Every report-producing stage writes a figure next to its delimited output:
the class-frequency profile with segment cuts, training loss curves, and
per-segment F1 bars.  The Agg backend keeps rendering headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_frequency_plot(freqs, seg, path) -> None:
    """Log-scale frequency-by-rank curve with the segment cut points."""
    freqs = np.asarray(freqs, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    ax.plot(np.arange(1, freqs.size + 1), freqs, lw=1.5, color="tab:blue")
    ax.set_yscale("log")
    for start, _ in seg.segments[1:]:
        ax.axvline(start - 0.5, color="grey", ls="--", lw=0.8)
    ax.set_xlabel("class rank")
    ax.set_ylabel("frequency")
    ax.set_title(f"class frequencies, {seg.num_segments} segments (eta={seg.eta:g})")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_loss_curves(histories: dict, path) -> None:
    """One curve per label; each history is a list of (step, loss)."""
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    plotted = False
    for label in sorted(histories):
        history = histories[label]
        if not history:
            continue
        steps, losses = zip(*history)
        ax.plot(steps, losses, lw=1.0, label=str(label))
        plotted = True
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_title("training loss")
    if plotted:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_segment_f1_bars(columns, rows: dict, path) -> None:
    """Grouped bars: one group per column, one bar per row label.

    ``columns`` names the groups (Total plus the segment names) and each row
    maps a label to its list of F1 values in column order.
    """
    x = np.arange(len(columns), dtype=np.float64)
    width = 0.8 / max(len(rows), 1)
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    for k, label in enumerate(sorted(rows)):
        ax.bar(x + k * width, rows[label], width, label=str(label))
    ax.set_xticks(x + width * (len(rows) - 1) / 2.0)
    ax.set_xticklabels(columns)
    ax.set_ylim(0.0, 1.0)
    ax.set_ylabel("micro F1")
    if rows:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
