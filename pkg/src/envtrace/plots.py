"""Report figures written next to the tabular benchmark output."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .bench import TaskResult  # noqa: E402

FIG_WIDTH = 6.0


def _figure(height_ratio: float = 0.75):
    fig, ax = plt.subplots(figsize=(FIG_WIDTH, FIG_WIDTH * height_ratio), constrained_layout=True)
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    return fig, ax


def scatter_full_vs_levenshtein(results: Sequence[tuple[int, TaskResult]], path, title: str = "") -> Path:
    """Full score against normalized Levenshtein distance, one point per task run.

    Points in the upper right are functionally right but textually far from
    every ground truth; the lower left is the opposite failure.
    """
    lev = np.array([100 * r.levenshtein for _, r in results])
    full = np.array([100 * r.best_full_score for _, r in results])
    acc = np.array([r.accuracy for _, r in results], dtype=bool)
    fig, ax = _figure()
    ax.scatter(lev[acc], full[acc], s=22, c="tab:blue", label="accurate", alpha=0.8)
    ax.scatter(lev[~acc], full[~acc], s=22, c="tab:red", marker="x", label="not accurate", alpha=0.8)
    ax.set_xlabel("Normalized Levenshtein distance (%)")
    ax.set_ylabel("EnvTrace full score (%)")
    ax.set_xlim(-2, 102)
    ax.set_ylim(-2, 102)
    if title:
        ax.set_title(title)
    ax.legend(frameon=False, loc="lower left")
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def component_bars(results: Sequence[tuple[int, TaskResult]], path, title: str = "") -> Path:
    """Per-task mean of PV match rate, timing score and temperature score."""
    tasks: dict[str, list[TaskResult]] = {}
    for _, r in results:
        tasks.setdefault(r.task_id, []).append(r)
    names = sorted(tasks)
    pv = [np.mean([r.best.pv_match_rate for r in tasks[n]]) for n in names]
    timing = [np.mean([r.best.timing.composite for r in tasks[n]]) for n in names]
    temp = [
        np.mean([r.best.temp.composite for r in tasks[n] if r.best.temp is not None] or [np.nan]) for n in names
    ]
    x = np.arange(len(names))
    width = 0.27
    fig, ax = _figure(0.55)
    ax.bar(x - width, np.multiply(pv, 100), width, label="PV match rate")
    ax.bar(x, np.multiply(timing, 100), width, label="Timing score")
    ax.bar(x + width, np.multiply(temp, 100), width, label="Temperature score")
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=60, ha="right", fontsize=7)
    ax.set_ylabel("Score (%)")
    ax.set_ylim(0, 105)
    if title:
        ax.set_title(title)
    ax.legend(frameon=False, fontsize=8, ncol=3, loc="upper center", bbox_to_anchor=(0.5, 1.12))
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def write_report_figures(results: Sequence[tuple[int, TaskResult]], out_path, title: str = "") -> list[Path]:
    """Write ``<stem>.scatter.png`` and ``<stem>.components.png`` beside ``out_path``."""
    out_path = Path(out_path)
    stem = out_path.with_suffix("")
    return [
        scatter_full_vs_levenshtein(results, stem.with_name(stem.name + ".scatter.png"), title),
        component_bars(results, stem.with_name(stem.name + ".components.png"), title),
    ]
