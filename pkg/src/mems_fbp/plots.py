"""Headless matplotlib renderers for run artifacts.

Every function takes plain arrays, writes one PNG, and returns its path.
Figures are closed after saving so long sweeps do not accumulate state.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402 - backend must be pinned first
import numpy as np  # noqa: E402

_DPI = 140


def _save(fig, path: Path) -> Path:
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def render_timeseries(columns: dict[str, np.ndarray], path: Path) -> Path:
    """Deflection minimum / weighted mass on top, energy ledger below."""
    t = columns["t"]
    fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(7.0, 6.4), sharex=True)
    ax0.plot(t, columns["min_u"], label="min u", color="tab:blue")
    ax0.plot(t, columns["X"], label="X", color="tab:orange")
    ax0.axhline(-1.0, color="k", lw=0.8, ls=":")
    ax0.set_ylabel("deflection measures")
    ax0.legend(loc="best", fontsize=8)
    ax0.grid(alpha=0.3)
    for key, color in (
        ("E_b", "tab:green"),
        ("E_s", "tab:red"),
        ("E_e", "tab:purple"),
        ("E_total", "k"),
        ("dissipation", "tab:gray"),
    ):
        ax1.plot(t, columns[key], label=key, color=color,
                 lw=1.6 if key == "E_total" else 1.0)
    ax1.set_xlabel("t")
    ax1.set_ylabel("energies")
    ax1.legend(loc="best", fontsize=8, ncol=2)
    ax1.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)


def render_profiles(x: np.ndarray, times: np.ndarray, profiles: np.ndarray,
                    path: Path, label: str = "t") -> Path:
    """Sampled deflection profiles colored from early (light) to late (dark)."""
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    cmap = plt.get_cmap("viridis")
    tmax = float(times[-1]) if len(times) and times[-1] > 0 else 1.0
    for k, t in enumerate(times):
        ax.plot(x, profiles[k], color=cmap(0.85 * float(t) / tmax), lw=1.0)
    ax.axhline(-1.0, color="k", lw=0.8, ls=":")
    ax.set_xlabel("x")
    ax.set_ylabel("u(x)")
    ax.set_title(
        f"{len(times)} samples, {label} in [{times[0]:.3g}, {times[-1]:.3g}]"
    )
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)


def render_branch(lams: np.ndarray, min_us: np.ndarray,
                  eigs: np.ndarray | None, path: Path) -> Path:
    """Continuation diagram: fold curve plus the stability eigenvalue."""
    ncols = 2 if eigs is not None and len(eigs) else 1
    fig, axes = plt.subplots(1, ncols, figsize=(4.2 * ncols + 1.2, 4.0))
    axes = np.atleast_1d(axes)
    axes[0].plot(lams, min_us, "o-", ms=3, color="tab:blue")
    axes[0].set_xlabel("lambda")
    axes[0].set_ylabel("min u")
    axes[0].grid(alpha=0.3)
    if ncols == 2:
        axes[1].plot(lams[: len(eigs)], eigs, "o-", ms=3, color="tab:red")
        axes[1].axhline(0.0, color="k", lw=0.8, ls=":")
        axes[1].set_xlabel("lambda")
        axes[1].set_ylabel("smallest eigenvalue")
        axes[1].grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)


def render_eigenfunction(x: np.ndarray, zeta1: np.ndarray,
                         mu1: float, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(x, zeta1, color="tab:blue")
    ax.set_xlabel("x")
    ax.set_ylabel("zeta_1(x)")
    ax.set_title(f"principal mode, mu_1 = {mu1:.6f}")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)


def render_sweep(values: np.ndarray, rows: list[dict], axis: str,
                 path: Path) -> Path:
    """One panel per numeric sweep column that has at least one finite value."""
    keys = [k for k in ("lambda_star", "lambda_c", "min_u", "t_event")
            if any(np.isfinite(r.get(k, np.nan)) for r in rows)]
    if not keys:
        keys = ["min_u"]
    fig, axes = plt.subplots(1, len(keys), figsize=(4.0 * len(keys) + 1.0, 3.8))
    axes = np.atleast_1d(axes)
    for ax, key in zip(axes, keys):
        ys = np.array([r.get(key, np.nan) for r in rows], dtype=float)
        ax.plot(values, ys, "o-", ms=4, color="tab:blue")
        ax.set_xlabel(axis)
        ax.set_ylabel(key)
        ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)
