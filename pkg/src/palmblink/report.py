"""Diagnostic figures rendered alongside the delimited outputs.

All figures are written as PNG with version-bearing metadata stripped, so a
repeated run with identical inputs produces byte-identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .fit import FitResult, StudyResult
from .spatial import Dataset

__all__ = [
    "save_simulation_figure",
    "save_fit_figure",
    "save_summaries_figure",
    "save_study_figure",
    "save_model_curves_figure",
]

_SAVE = dict(dpi=150, metadata={"Software": None})


def _finish(fig, path) -> None:
    fig.savefig(path, **_SAVE)
    plt.close(fig)


def save_simulation_figure(path, dataset: Dataset) -> None:
    """Spatial scatter colored by time, plus the time histogram."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 5))
    sc = ax1.scatter(dataset.x, dataset.y, c=dataset.t, s=2, cmap="viridis", linewidths=0)
    ax1.set_xlabel("x [nm]")
    ax1.set_ylabel("y [nm]")
    ax1.set_title(f"{dataset.n} localizations")
    ax1.set_aspect("equal")
    fig.colorbar(sc, ax=ax1, label="t [s]")
    ax2.hist(dataset.t, bins=60, color="tab:blue")
    ax2.set_xlabel("t [s]")
    ax2.set_ylabel("count")
    ax2.set_title("arrival times")
    fig.tight_layout()
    _finish(fig, path)


def save_fit_figure(path, result: FitResult) -> None:
    """Projection fit, pair correlation, autoconvolution and time distribution."""
    diag = result.diagnostics
    fig, axes = plt.subplots(2, 2, figsize=(11, 8))

    ax = axes[0, 0]
    ax.plot(diag["u_final"], diag["zeta_final"], "o", ms=4, label="projected")
    ax.plot(diag["u_final"], diag["zeta_model"], "-", label="fitted model")
    ax.set_xlabel("time cutoff u [s]")
    ax.set_ylabel("projected pair excess")
    ax.legend()
    ax.set_title(
        f"r_d={result.rates.r_d:.2f}  r_r={result.rates.r_r:.2f}  "
        f"r_b={result.rates.r_b:.2f}  r_f={result.rates.r_f * 1e3:.2f}e-3"
    )

    ax = axes[0, 1]
    ax.plot(diag["r_grid"], diag["pcf"], "-")
    ax.axhline(1.0, color="gray", lw=0.8)
    ax.set_xlabel("r [nm]")
    ax.set_ylabel("pair correlation")
    ax.set_title("observed pattern")

    ax = axes[1, 0]
    ax.plot(diag["r_grid"], diag["autoconv"], "-")
    ax.set_xlabel("r [nm]")
    ax.set_ylabel("error autoconvolution [1/nm^2]")
    ax.set_title("projection kernel")

    ax = axes[1, 1]
    ax.plot(diag["time_cdf_support"], diag["time_cdf_values"], "-")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("signal time distribution")
    ax.set_ylim(0, 1.02)
    ax.set_title(f"eta = {result.eta.eta:.3f}")

    fig.tight_layout()
    _finish(fig, path)


def save_summaries_figure(
    path,
    r: np.ndarray,
    pcf: np.ndarray,
    autoconv: np.ndarray,
    u: np.ndarray,
    zeta: np.ndarray,
) -> None:
    """Pair correlation, autoconvolution and projected pair excess."""
    fig, axes = plt.subplots(1, 3, figsize=(14, 4.2))
    axes[0].plot(r, pcf, "-")
    axes[0].axhline(1.0, color="gray", lw=0.8)
    axes[0].set_xlabel("r [nm]")
    axes[0].set_ylabel("pair correlation")
    axes[1].plot(r, autoconv, "-")
    axes[1].set_xlabel("r [nm]")
    axes[1].set_ylabel("error autoconvolution [1/nm^2]")
    axes[2].plot(u, zeta, "o-", ms=4)
    axes[2].set_xlabel("time cutoff u [s]")
    axes[2].set_ylabel("projected pair excess")
    fig.tight_layout()
    _finish(fig, path)


def save_study_figure(path, study: StudyResult, truth: dict[str, float]) -> None:
    """Per-replicate estimates against ground-truth lines."""
    fields = [
        ("r_f", 1e3, "r_f x 1e3 [1/s]"),
        ("r_d", 1.0, "r_d [1/s]"),
        ("r_r", 1.0, "r_r [1/s]"),
        ("r_b", 1.0, "r_b [1/s]"),
    ]
    fig, axes = plt.subplots(1, 4, figsize=(14, 3.6))
    for ax, (name, scale, label) in zip(axes, fields):
        vals = np.array(
            [row[name] for row in study.replicates if not row["error"]], dtype=float
        )
        ax.plot(np.arange(1, vals.size + 1), vals * scale, "o", ms=4)
        if name in truth:
            ax.axhline(truth[name] * scale, color="tab:red", lw=1.0)
        ax.set_xlabel("replicate")
        ax.set_ylabel(label)
    fig.tight_layout()
    _finish(fig, path)


def save_model_curves_figure(
    path,
    u: np.ndarray,
    lag_cdf: np.ndarray,
    v: np.ndarray,
    cf: np.ndarray,
) -> None:
    """Frame-lag distribution function and characteristic function modulus."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4.2))
    ax1.plot(u, lag_cdf, "-")
    ax1.set_xlabel("lag u [s]")
    ax1.set_ylabel("lag distribution function")
    ax1.set_ylim(0, 1.02)
    ax2.plot(v, np.abs(cf), "-")
    ax2.set_xlabel("frequency v [1/s]")
    ax2.set_ylabel("|characteristic function|")
    fig.tight_layout()
    _finish(fig, path)
