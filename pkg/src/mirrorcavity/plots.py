"""Figure rendering for sweep outputs.

Figures are written next to the delimited data files; nothing is ever shown
interactively, so the Agg backend is forced before pyplot loads.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

DPI = 150


def render_g2_sweep(rows, axis_field: str, path, mode: str = "paper") -> str:
    """Plot g2 along the sweep axis, one marker set per branch and route."""
    fig, ax = plt.subplots(figsize=(7, 4.5), constrained_layout=True)
    branch_ids = sorted({r.report.branch_id for r in rows})
    for bid in branch_ids:
        sel = [r for r in rows if r.report.branch_id == bid]
        x = np.array([r.axis_value for r in sel])
        cov = np.array([r.report.g2_covariance for r in sel])
        closed = np.array([r.report.g2_eq_closed for r in sel])
        stable = np.array([r.report.stable for r in sel])
        line, = ax.plot(x[stable], cov[stable], "o-", ms=3,
                        label=f"branch {bid}, covariance ({mode})")
        ax.plot(x[stable], closed[stable], "s--", ms=3, color=line.get_color(),
                alpha=0.6, label=f"branch {bid}, closed form")
        if (~stable).any():
            ax.plot(x[~stable], np.full((~stable).sum(), 1.0), "x", ms=4,
                    color=line.get_color(), alpha=0.4)
    ax.axhline(1.0, color="k", lw=0.8, alpha=0.6)
    ax.set_xlabel(axis_field)
    ax.set_ylabel(r"$g^{(2)}(0)$")
    ax.legend(fontsize=8)
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return str(path)


def render_stability_map(rows, axis1_field: str, axis2_field: str, path) -> str:
    """Two-panel map: branch multiplicity and number of stable branches."""
    v1 = np.array(sorted({r.axis1_value for r in rows}))
    v2 = np.array(sorted({r.axis2_value for r in rows}))
    i1 = {v: i for i, v in enumerate(v1)}
    i2 = {v: i for i, v in enumerate(v2)}
    mult = np.zeros((v1.size, v2.size))
    stab = np.zeros((v1.size, v2.size))
    for r in rows:
        a, b = i1[r.axis1_value], i2[r.axis2_value]
        mult[a, b] = r.n_branches
        stab[a, b] += 1 if r.report.stable else 0

    extent = None
    if v1.size > 1 and v2.size > 1:
        extent = [v2[0], v2[-1], v1[0], v1[-1]]
    fig, axes = plt.subplots(1, 2, figsize=(9, 4), constrained_layout=True)
    for ax, data, title in ((axes[0], mult, "branch count"),
                            (axes[1], stab, "stable branch count")):
        im = ax.imshow(data, origin="lower", aspect="auto", extent=extent,
                       interpolation="nearest")
        ax.set_xlabel(axis2_field)
        ax.set_ylabel(axis1_field)
        ax.set_title(title)
        fig.colorbar(im, ax=ax, shrink=0.85)
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return str(path)
