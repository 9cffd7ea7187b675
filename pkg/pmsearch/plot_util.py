"""
Plot utilities for pmsearch.

Bar charts of evaluation reports: per-topic metrics of one run and the mean
metrics of several runs side by side (the strategy comparison ladder).
Figures are drawn with the non-interactive Agg backend and saved to disk.
"""

from __future__ import annotations

from pathlib import Path
from typing import Dict, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402

from .evaluation import METRIC_LABELS, METRIC_NAMES, MetricsReport  # noqa: E402
from .logging_util import get_logger  # noqa: E402

logger = get_logger(__name__)


DEFAULT_PLOT_STYLE = {
    "title_fontsize": 16,
    "label_fontsize": 13,
    "tick_fontsize": 11,
    "legend_fontsize": 11,
    "grid": True,
}


def _ensure_output_directory(savedir: Union[str, Path]) -> Path:
    dir_path = Path(savedir)
    dir_path.mkdir(parents=True, exist_ok=True)
    return dir_path


def _save_figure(fig: Figure, savedir: Optional[Union[str, Path]], savename: Optional[str]) -> Optional[Path]:
    """Save ``fig`` when a name is given; returns the written path."""
    if savename is None:
        return None
    output_path = _ensure_output_directory(savedir if savedir is not None else ".") / savename
    try:
        fig.savefig(output_path, dpi=150, bbox_inches="tight")
        logger.info("figure saved to %s", output_path)
    except Exception as e:
        logger.error("error saving figure: %s", e)
        raise
    return output_path


def _grouped_bars(ax, labels: Sequence[str], series: Dict[str, Sequence[float]]) -> None:
    x = np.arange(len(labels))
    width = 0.8 / max(len(series), 1)
    for i, (name, values) in enumerate(series.items()):
        ax.bar(x + (i - (len(series) - 1) / 2) * width, values, width, label=name)
    ax.set_xticks(x)
    ax.set_xticklabels(labels, fontsize=DEFAULT_PLOT_STYLE["tick_fontsize"])
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("score", fontsize=DEFAULT_PLOT_STYLE["label_fontsize"])
    ax.legend(fontsize=DEFAULT_PLOT_STYLE["legend_fontsize"])
    if DEFAULT_PLOT_STYLE["grid"]:
        ax.grid(True, axis="y", alpha=0.3)


def plot_topic_metrics(
    report: MetricsReport,
    savedir: Optional[Union[str, Path]] = None,
    savename: Optional[str] = None,
    title: Optional[str] = None,
) -> Figure:
    """
    Grouped bar chart of P@10, R@1000 and R-prec for every topic of a report.

    Args:
        report: Evaluation report
        savedir: Output directory (default: current directory)
        savename: File name; the figure is only saved when given
        title: Figure title (default: the report name)

    Returns:
        The matplotlib figure
    """
    topics = report.topics
    series = {
        METRIC_LABELS[name]: [getattr(report.per_topic[t], name) for t in topics]
        for name in METRIC_NAMES
    }
    fig, ax = plt.subplots(figsize=(max(6.0, 0.6 * len(topics) + 2.0), 4.5))
    _grouped_bars(ax, [str(t) for t in topics], series)
    ax.set_xlabel("topic", fontsize=DEFAULT_PLOT_STYLE["label_fontsize"])
    ax.set_title(title or report.name or "per-topic metrics",
                 fontsize=DEFAULT_PLOT_STYLE["title_fontsize"])
    _save_figure(fig, savedir, savename)
    return fig


def plot_strategy_comparison(
    reports: Sequence[MetricsReport],
    savedir: Optional[Union[str, Path]] = None,
    savename: Optional[str] = None,
    title: str = "retrieval strategies",
) -> Figure:
    """Mean metrics of several reports, one bar group per report."""
    if not reports:
        raise ValueError("no reports to compare")
    labels = [r.name or f"run {i + 1}" for i, r in enumerate(reports)]
    series = {
        METRIC_LABELS[name]: [r.means[name] for r in reports]
        for name in METRIC_NAMES
    }
    fig, ax = plt.subplots(figsize=(max(6.0, 1.5 * len(reports) + 2.0), 4.5))
    _grouped_bars(ax, labels, series)
    ax.set_title(title, fontsize=DEFAULT_PLOT_STYLE["title_fontsize"])
    _save_figure(fig, savedir, savename)
    return fig
