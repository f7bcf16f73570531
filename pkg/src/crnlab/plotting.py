"""PNG figures for diagnostics and experiment reports (headless Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .simulator import DiagnosticsSeries  # noqa: E402


def _positive(y):
    y = np.asarray(y, dtype=float)
    return np.where(y > 0, y, np.nan)


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp.png")
    fig.savefig(tmp, dpi=120, metadata={"Software": None})
    plt.close(fig)
    tmp.replace(path)
    return path


def plot_diagnostics(series: DiagnosticsSeries, path) -> Path:
    """Species means, deviation norms and conserved totals against time."""
    fig, axes = plt.subplots(1, 3, figsize=(13, 3.8), constrained_layout=True)
    for i, name in enumerate(series.species):
        axes[0].plot(series.t, series.mean[:, i], label=name)
        axes[1].semilogy(series.t, _positive(series.h2_dev[:, i]), label=name)
    axes[0].set(xlabel="t", ylabel="spatial mean", title="means")
    axes[1].set(xlabel="t", ylabel="H2 norm of deviation", title="deviation")
    for j, name in enumerate(series.total_names):
        drift = series.totals[:, j] - series.totals[0, j]
        axes[2].plot(series.t, drift, label=name)
    axes[2].set(xlabel="t", ylabel="total minus initial", title="conserved totals")
    for ax in axes:
        if ax.lines:
            ax.legend(fontsize="small")
    return _save(fig, path)


def plot_instability(report, path) -> Path:
    diag = report.trajectory.diagnostics
    fig, ax = plt.subplots(figsize=(6, 4), constrained_layout=True)
    ax.semilogy(diag.t, _positive(diag.y_norm), label="||u|| + ||u_t||")
    ax.semilogy(diag.t, report.delta * np.exp(report.growth_rate * diag.t), "--", label=f"delta exp({report.growth_rate:.3g} t)")
    ax.axhline(report.theta0, color="k", lw=0.8, label="theta0")
    if report.escaped:
        ax.axvline(report.measured_escape, color="C3", lw=0.8, label="measured escape")
    ax.axvline(report.predicted_escape, color="C2", lw=0.8, ls=":", label="predicted escape")
    ax.set(xlabel="t", ylabel="size of deviation", title="escape from boundary equilibrium")
    ax.legend(fontsize="small")
    return _save(fig, path)


def plot_stability(report, path) -> Path:
    diag = report.trajectory.diagnostics
    fig, (left, right) = plt.subplots(1, 2, figsize=(10, 4), constrained_layout=True)
    t, h2 = report.h2_series
    left.semilogy(t, _positive(h2), label="sum of H2 norms")
    if report.fit is not None:
        left.semilogy(t, np.exp(report.fit.intercept + report.fit.rate * t), "--", label=f"fit, rate {report.fit.rate:.3g}")
    left.set(xlabel="t", title="deviation decay")
    right.semilogy(diag.t, _positive(diag.energy), label="weighted energy")
    right.semilogy(diag.t, _positive(diag.rate_energy), label="weighted energy of u_t")
    right.set(xlabel="t", title="energies")
    for ax in (left, right):
        ax.legend(fontsize="small")
    return _save(fig, path)
