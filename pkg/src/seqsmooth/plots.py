"""Figure rendering for CLI reports (Agg backend, written next to the data)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .hull import PropReport
from .pipeline import RunReport, StudyReport, SweepReport

_DPI = 150


def save_prop_figure(report: PropReport, path) -> None:
    """Fraction outside and mean min-distance vs latent dimension, with bound."""
    dims = [e.d for e in report.entries]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    ax1.plot(dims, [e.fraction_outside for e in report.entries], "o-", color="tab:blue")
    ax1.set_xlabel("latent dimension d")
    ax1.set_ylabel("fraction outside hull")
    ax1.set_ylim(-0.02, 1.05)
    ax1.set_xscale("log", base=2)
    ax1.grid(alpha=0.3)
    ax2.plot(dims, [e.mean_min_distance for e in report.entries], "o-", label="mean min distance")
    ax2.plot(dims, [e.bound for e in report.entries], "k--", label=r"bound $2(1-\beta)\sqrt{d}$")
    ax2.set_xlabel("latent dimension d")
    ax2.set_ylabel("distance")
    ax2.set_xscale("log", base=2)
    ax2.legend(frameon=False)
    ax2.grid(alpha=0.3)
    fig.suptitle(f"source={report.source}, N={report.n_points}, beta={report.beta:g}")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_run_figure(report: RunReport, path) -> None:
    """Predicted vs oracle scores per design, smoothed vs unsmoothed."""
    fig, ax = plt.subplots(figsize=(5, 4))
    plotted = False
    for label, variant, color in (
        ("smoothed", report.smoothed, "tab:blue"),
        ("unsmoothed", report.unsmoothed, "tab:orange"),
    ):
        if variant is None:
            continue
        xs = [d.predicted_score for d in variant.designs]
        ys = [d.oracle_score for d in variant.designs]
        if any(y is None for y in ys):
            continue
        ax.scatter(xs, ys, s=14, alpha=0.7, label=label, color=color)
        plotted = True
    if report.best_training_fitness_raw is not None:
        ax.axhline(report.best_training_fitness_raw, color="k", ls=":", lw=1, label="best training")
    ax.set_xlabel("predicted score")
    ax.set_ylabel("oracle score")
    if plotted:
        ax.legend(frameon=False, fontsize=8)
    ax.set_title(f"{report.name} (seed {report.seed})")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_limits_figure(study: StudyReport, path) -> None:
    """Design fitness vs labeled-data ratio, one line per subsampling mode."""
    fig, ax = plt.subplots(figsize=(5, 4))
    for mode, color in zip(study.modes, ("tab:blue", "tab:orange", "tab:green")):
        cells = [c for c in study.cells if c.mode == mode]
        cells.sort(key=lambda c: c.ratio)
        ax.errorbar(
            [c.ratio for c in cells],
            [c.mean for c in cells],
            yerr=[c.std for c in cells],
            marker="o",
            capsize=3,
            label=mode,
            color=color,
        )
    ax.set_xlabel("labeled data ratio r")
    ax.set_ylabel("median design fitness")
    ax.legend(frameon=False)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_sweep_figure(report: SweepReport, path) -> None:
    """Ranked configuration fitness; a quick view of the sweep landscape."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    fitness = [row.metrics.fitness for row in report.rows]
    ax.plot(np.arange(len(fitness)), fitness, "o-", ms=3)
    if report.rows:
        ax.axhline(report.rows[0].best_training_fitness, color="k", ls=":", lw=1, label="best training")
        ax.legend(frameon=False)
    ax.set_xlabel("configuration rank")
    ax.set_ylabel("median design fitness")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
