"""Report figures rendered with the Agg backend to byte-stable PNG files."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_RATINGS = ("Low", "Medium", "High")
_COLORS = {"Low": "#8fbf7f", "Medium": "#f2c14e", "High": "#d1495b"}


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    # no Software/date chunks, so identical data gives identical bytes
    fig.savefig(tmp, format="png", dpi=100, metadata={"Software": None})
    plt.close(fig)
    tmp.replace(path)
    return path


def plot_activity(distribution: dict, path: Path) -> Path:
    counts = [distribution["ratings"][r]["count"] for r in _RATINGS]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.bar(_RATINGS, counts, color=[_COLORS[r] for r in _RATINGS])
    for x, n in enumerate(counts):
        ax.annotate(str(n), (x, n), ha="center", va="bottom", fontsize=8)
    ax.set_ylabel("scripts")
    ax.set_title(f"Script activity ({distribution['total']} scripts)")
    fig.tight_layout()
    return _save(fig, path)


def plot_top_handlers(events: dict, path: Path) -> Path:
    fig, axes = plt.subplots(1, 2, figsize=(10, 4.5))
    for ax, key, label in (
        (axes[0], "top_by_occurrence", "occurrences"),
        (axes[1], "top_by_pages", "pages"),
    ):
        rows = events[key]
        names = [r["handler"] for r in rows][::-1]
        values = [r["value"] for r in rows][::-1]
        ax.barh(names, values, color="#30638e")
        ax.set_xlabel(label)
        ax.tick_params(axis="y", labelsize=8)
    fig.suptitle("Top event handlers")
    fig.tight_layout()
    return _save(fig, path)


def plot_transport_activity(activity: dict, path: Path) -> Path:
    groups = list(activity)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    bottom = [0] * len(groups)
    for rating in _RATINGS:
        values = [activity[g][rating] for g in groups]
        ax.bar(groups, values, bottom=bottom, label=rating, color=_COLORS[rating])
        bottom = [b + v for b, v in zip(bottom, values)]
    ax.set_ylabel("script matches")
    ax.set_yscale("symlog")
    ax.legend(fontsize=8)
    ax.set_title("Activity per transport group")
    fig.tight_layout()
    return _save(fig, path)


def plot_header_percentages(percent: dict, path: Path) -> Path:
    groups = list(percent)
    headers = list(next(iter(percent.values()))) if percent else []
    width = 0.8 / max(1, len(groups))
    fig, ax = plt.subplots(figsize=(7, 3.8))
    for gi, group in enumerate(groups):
        xs = [i + gi * width for i in range(len(headers))]
        ax.bar(xs, [percent[group][h] for h in headers], width=width, label=group)
    ax.set_xticks([i + width * (len(groups) - 1) / 2 for i in range(len(headers))])
    ax.set_xticklabels(headers, fontsize=7)
    ax.set_ylabel("% of responses")
    ax.legend(fontsize=8)
    ax.set_title("Security headers per transport group")
    fig.tight_layout()
    return _save(fig, path)


def plot_networks(rows: Sequence[dict], path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.8))
    ax.scatter([r["score"] for r in rows], [r["size"] for r in rows], s=18, color="#d1495b")
    ax.set_xlabel("network score")
    ax.set_ylabel("network size (page domains)")
    ax.set_title(f"Signature-based networks ({len(rows)})")
    fig.tight_layout()
    return _save(fig, path)
