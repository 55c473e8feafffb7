"""Figures for the analysis report, rendered to files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .analysis import BlowupSeries, FitResult, RescaledProfile, rate_derivative  # noqa: E402


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_ring_radius(series: BlowupSeries, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.semilogx(series.inv_L, series.r_max, lw=1.2)
    ax.set_xlabel("1/L")
    ax.set_ylabel("r_max")
    return _save(fig, path)


def plot_rate_fit(series: BlowupSeries, tc: float, fit: FitResult, path: Path) -> Path:
    gap = tc - series.t
    ok = gap > 0
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.loglog(gap[ok], series.L[ok], "o", ms=2, label="simulation")
    g = np.geomspace(gap[ok].min(), gap[ok].max(), 100)
    ax.loglog(g, fit.kappa * g**fit.p, "--", label=f"{fit.kappa:.4g} (Tc - t)^{fit.p:.5g}")
    ax.set_xlabel("Tc - t")
    ax.set_ylabel("L")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_rate_limit(series: BlowupSeries, order: int, path: Path, limit: float | None = None) -> Path:
    q = rate_derivative(series, order)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.semilogx(series.inv_L[1:-1], q, lw=1.2)
    if limit is not None:
        ax.axhline(limit, color="k", ls=":", lw=0.8)
    ax.set_xlabel("1/L")
    ax.set_ylabel("L L_t" if order == 2 else "L^3 L_t")
    return _save(fig, path)


def plot_profiles(profiles: list[RescaledProfile], path: Path, reference: RescaledProfile | None = None) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for p in profiles:
        ax.plot(p.rho, p.amplitude, lw=1.2, label=f"1/L = {p.level:.3g}")
    if reference is not None:
        ax.plot(reference.rho, reference.amplitude, "k--", lw=1.0, label="reference")
    ax.set_xlabel("rho")
    ax.set_ylabel("rescaled amplitude")
    ax.legend(fontsize=8)
    return _save(fig, path)
