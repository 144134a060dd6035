"""Figure rendering for the report paths.

Distributions are drawn as stem plots (value on x, probability on y) and
written next to the CSV plot data.  The Agg backend keeps rendering
headless; PNG metadata is pinned so repeated runs produce identical files.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .pmf import Pmf

__all__ = ["save_pmf_figure", "save_pmf_overlay"]

_METADATA = {"Software": "taskpower"}


def save_pmf_figure(p: Pmf, title: str, path: str | Path) -> None:
    """Render one distribution to a PNG file."""
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    markerline, stemlines, _ = ax.stem(p.values, p.probs, basefmt=" ")
    plt.setp(markerline, markersize=4)
    plt.setp(stemlines, linewidth=1.2)
    ax.set_xlabel(p.unit.value)
    ax.set_ylabel("probability")
    ax.set_title(title)
    ax.set_ylim(bottom=0)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_METADATA)
    plt.close(fig)


def save_pmf_overlay(
    series: Sequence[tuple[str, Pmf]], title: str, path: str | Path
) -> None:
    """Render several distributions into one comparison figure."""
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    for label, p in series:
        markerline, stemlines, _ = ax.stem(p.values, p.probs, basefmt=" ", label=label)
        plt.setp(markerline, markersize=4)
        plt.setp(stemlines, linewidth=1.2)
    ax.set_xlabel(series[0][1].unit.value)
    ax.set_ylabel("probability")
    ax.set_title(title)
    ax.set_ylim(bottom=0)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_METADATA)
    plt.close(fig)
