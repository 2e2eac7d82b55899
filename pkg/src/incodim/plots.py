"""Figure rendering for sweep and threshold reports.

Figures are written straight to files next to the delimited output; no
interactive backends are touched.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def sweep_figure(rows: list, path: str) -> str:
    """Chord-grid compatibility maps, one panel per noise level.

    Incompatible chords are drawn on top of the compatible background, with
    the indicator value Z as the colour scale of the compatible cells.
    """
    t_values = sorted({row["t"] for row in rows})
    n_panels = len(t_values)
    fig, axes = plt.subplots(
        1, n_panels, figsize=(4.2 * n_panels, 4.0), squeeze=False, sharey=True
    )
    for ax, t in zip(axes[0], t_values):
        sub = [r for r in rows if r["t"] == t]
        phi = np.array([r["phi0"] for r in sub])
        psi = np.array([r["psi0"] for r in sub])
        comp = np.array([r["compatible"] for r in sub], dtype=bool)
        z = np.array([r["Z"] for r in sub])
        sc = ax.scatter(phi[comp], psi[comp], c=z[comp], s=6, cmap="viridis", marker="s")
        if (~comp).any():
            ax.scatter(
                phi[~comp], psi[~comp], color="crimson", s=8, marker="s",
                label="incompatible chord",
            )
            ax.legend(loc="upper right", fontsize=8)
        ax.set_title(f"t = {t:.6g}")
        ax.set_xlabel(r"$\varphi_0$")
        ax.set_xlim(0, math.pi / 2)
        ax.set_ylim(0, math.pi / 2)
    axes[0][0].set_ylabel(r"$\psi_0$")
    fig.colorbar(sc, ax=axes[0][-1], label="Z at extreme angles")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def threshold_figure(trace: list, t0: float, path: str) -> str:
    """Bisection trace: incompatibility dimension against noise level."""
    ts = [t for t, _ in trace]
    chis = [chi for _, chi in trace]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.scatter(ts, chis, color="tab:blue", zorder=3, label="evaluations")
    ax.axvline(t0, color="crimson", linestyle="--", label=f"$t_0$ = {t0:.6f}")
    ax.axvline(1 / math.sqrt(2), color="gray", linestyle=":", label=r"$1/\sqrt{2}$")
    ax.set_xlabel("noise level t")
    ax.set_ylabel("incompatibility dimension")
    ax.set_yticks([2, 3])
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
