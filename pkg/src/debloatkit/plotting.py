"""Before/after size figures and their tab-separated companions."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .harness import METRICS, SizeStats, reduction_report  # noqa: E402

LABELS = {"irInsts": "IR insts", "funcs": "functions", "basicBlocks": "basic blocks",
          "globals": "globals"}


def sizes_tsv(rows: list[tuple[str, SizeStats]]) -> str:
    """One row per program/label, one column per metric."""
    lines = ["name\t" + "\t".join(METRICS)]
    for name, s in rows:
        d = s.as_dict()
        lines.append(name + "\t" + "\t".join(str(d[m]) for m in METRICS))
    return "\n".join(lines) + "\n"


def reduction_tsv(before: SizeStats, after: SizeStats) -> str:
    red = reduction_report(before, after)
    b, a = before.as_dict(), after.as_dict()
    lines = ["metric\tbefore\tafter\treductionPercent"]
    for m in METRICS:
        pct = f"{red[m]:.2f}" if m in red else ""
        lines.append(f"{m}\t{b[m]}\t{a[m]}\t{pct}")
    return "\n".join(lines) + "\n"


def plot_sizes(rows: list[tuple[str, SizeStats]], path, title: str = "") -> None:
    """Grouped bars: one group per metric, one bar per row."""
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    width = 0.8 / max(len(rows), 1)
    for k, (name, s) in enumerate(rows):
        d = s.as_dict()
        xs = [i + k * width for i in range(len(METRICS))]
        bars = ax.bar(xs, [d[m] for m in METRICS], width, label=name)
        ax.bar_label(bars, fontsize=7)
    ax.set_xticks([i + width * (len(rows) - 1) / 2 for i in range(len(METRICS))])
    ax.set_xticklabels([LABELS[m] for m in METRICS])
    ax.set_ylabel("count")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
