"""Report figures rendered next to the delimited output files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import MetricsReport, RankedSystem


def save_report_figure(report: MetricsReport, path, title: str = ""):
    """Four-panel summary: headline metrics, per-class localization error
    and recall, and the pooled detection tallies."""
    fig, axes = plt.subplots(2, 2, figsize=(10, 7))
    fig.suptitle(title or "SELD evaluation")

    ax = axes[0, 0]
    names = ["ER", "F", "LE/180", "LR"]
    values = [report.er_20, report.f_20, report.le_cd / 180.0, report.lr_cd]
    bars = ax.bar(names, values, color=["#c44", "#4a4", "#c44", "#4a4"])
    for bar, raw in zip(bars, [report.er_20, 100 * report.f_20,
                               report.le_cd, 100 * report.lr_cd]):
        ax.text(bar.get_x() + bar.get_width() / 2, bar.get_height() + 0.01,
                f"{raw:.1f}", ha="center", fontsize=9)
    ax.set_ylim(0, max(1.05, max(values) * 1.15))
    ax.set_title(f"joint metrics (threshold {report.threshold_deg:g} deg)")

    has_refs = report.counts.nref > 0
    classes = np.nonzero(has_refs)[0]

    ax = axes[0, 1]
    if classes.size:
        ax.bar(classes, report.class_le[classes], color="#779")
    ax.set_title("per-class localization error (deg)")
    ax.set_xlabel("class index")

    ax = axes[1, 0]
    if classes.size:
        ax.bar(classes, report.class_lr[classes], color="#797")
        ax.set_ylim(0, 1.05)
    ax.set_title("per-class localization recall")
    ax.set_xlabel("class index")

    ax = axes[1, 1]
    c = report.counts
    tallies = {
        "TP": int(c.tp.sum()), "FP": int(c.fp.sum()), "FN": int(c.fn.sum()),
        "S": c.subs, "D": c.dels, "I": c.ins,
    }
    ax.bar(list(tallies), list(tallies.values()), color="#997")
    ax.set_title(f"detection tallies (Nref {int(c.nref.sum())})")

    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_rank_figure(ranked: list[RankedSystem], path):
    """Horizontal rank-sum bars, best system on top."""
    fig, ax = plt.subplots(figsize=(8, 1.2 + 0.5 * len(ranked)))
    ids = [s.system_id for s in ranked][::-1]
    sums = [s.rank_sum for s in ranked][::-1]
    ax.barh(ids, sums, color="#68a")
    ax.set_xlabel("rank sum (lower is better)")
    ax.set_title("system ranking")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
