"""Figure rendering for the CLI report paths.

The core library stays plot-free; these helpers turn its result objects into
PNG files written next to the delimited output.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from .simulate import ReserveReport
from .triangles import ChainLadderResult, Triangle


def save_reserve_figure(report: ReserveReport, path) -> None:
    """Histogram of per-path reserve totals with the point estimate and quantiles."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    totals = report.path_totals
    bins = min(60, max(10, report.n_paths // 20))
    ax1.hist(totals, bins=bins, color="#4878a8", alpha=0.85)
    ax1.axvline(report.point_estimate, color="black", lw=1.5, label="point estimate")
    for q, v in sorted(report.quantiles.items()):
        ax1.axvline(v, color="#b04a4a", ls="--", lw=1, label=f"q{q:g}")
    ax1.set_xlabel("future payment total per path")
    ax1.set_ylabel("paths")
    ax1.legend(fontsize=8)

    by_year = report.by_calendar_year
    if len(by_year):
        ax2.bar(by_year["calendar_year"], by_year["paid"], color="#4878a8", alpha=0.85)
        ax2.set_xlabel("calendar year")
        ax2.set_ylabel("expected paid")
    ax2.set_title("expected payments per future year", fontsize=10)
    fig.suptitle(f"RBNS reserve: {report.point_estimate:,.0f} over {report.n_paths} paths",
                 fontsize=11)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_triangle_figure(triangle: Triangle, path) -> None:
    """Heatmap of the observed triangle cells."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    masked = np.ma.masked_invalid(triangle.values)
    im = ax.imshow(masked, aspect="auto", cmap="viridis")
    fig.colorbar(im, ax=ax, label=triangle.layer)
    ax.set_xticks(range(triangle.n_dev), [str(j + 1) for j in range(triangle.n_dev)])
    ax.set_yticks(range(triangle.n_rows), [str(i + 1) for i in range(triangle.n_rows)])
    ax.set_xlabel("development year")
    ax.set_ylabel("reporting year")
    ax.set_title(f"runoff triangle ({triangle.layer})")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_chainladder_figure(result: ChainLadderResult, path) -> None:
    """Observed cumulative development per reporting year with projection dashed."""
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    d = result.completed.shape[1]
    xs = np.arange(1, d + 1)
    cmap = plt.get_cmap("tab10")
    for i in range(result.completed.shape[0]):
        t = int(result.latest_dev[i])
        if t == 0:
            continue
        color = cmap(i % 10)
        ax.plot(xs[:t], result.completed[i, :t], "-o", ms=3, color=color,
                label=f"year {i + 1}")
        if t < d:
            ax.plot(xs[t - 1:], result.completed[i, t - 1:], "--", color=color, alpha=0.7)
    ax.set_xlabel("development year")
    ax.set_ylabel("cumulative amount")
    ax.set_title("chain-ladder completion (dashed = projected)")
    if result.completed.shape[0] <= 10:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_evaluation_figure(results: pd.DataFrame, path, cap: float | None = None) -> None:
    """Percentage-error series per model over the evaluation dates."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for model, group in results.groupby("model", sort=False):
        ax.plot(group["date"], group["pe"], "-o", ms=4, label=str(model))
    ax.axhline(0.0, color="black", lw=0.8)
    if cap is not None:
        ax.set_ylim(-1.1 * cap, 1.1 * cap)
    ax.set_xlabel("evaluation date (calendar year)")
    ax.set_ylabel("percentage error of the reserve")
    ax.legend(fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
