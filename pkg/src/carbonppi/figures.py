"""Matplotlib rendering of the figure datasets to PNG files.

Rendering is a convenience layered on top of the CSV data outputs; every
renderer takes the same (header, rows) pair its dataset builder produced and
writes one file.  The Agg backend keeps this usable in batch runs.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _columns(header, rows) -> dict:
    arr = np.asarray(rows, dtype=float)
    return {name: arr[:, j] for j, name in enumerate(header)}


def render_filter_demo(header, rows, path) -> None:
    c = _columns(header, rows)
    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.plot(c["t"], c["factor"], color="tab:blue", lw=1.0, label="factor")
    ax.plot(c["t"], c["filtered_mean"], color="magenta", ls="--", lw=1.2,
            label="filtered mean")
    ax.set_xlabel("time (years)")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_initial_exposures(header, rows, path) -> None:
    c = _columns(header, rows)
    deltas = sorted(set(c["delta"]))
    epsilons = sorted(set(c["epsilon"]))
    assets = sorted(set(c["asset"]))
    fig, axes = plt.subplots(len(deltas), len(epsilons),
                             figsize=(4.0 * len(epsilons), 2.8 * len(deltas)),
                             sharey="row", squeeze=False)
    for i, delta in enumerate(deltas):
        for j, eps in enumerate(epsilons):
            ax = axes[i][j]
            mask = (c["delta"] == delta) & (c["epsilon"] == eps)
            heights = [c["exposure"][mask & (c["asset"] == a)][0] for a in assets]
            ax.bar([f"S{int(a)}" for a in assets], heights, color="tab:green",
                   edgecolor="black", linewidth=0.4)
            ax.set_title(f"delta={delta:g}, epsilon={eps:g}", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_exposure_paths(header, rows, path) -> None:
    c = _columns(header, rows)
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for name in header[1:]:
        ax.plot(c["t"], c[name], lw=0.9, label=name.replace("exposure_", "stock "))
    ax.set_xlabel("time (years)")
    ax.set_ylabel("exposure (fraction of wealth)")
    ax.legend(frameon=False, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_multiplier_curve(header, rows, path) -> None:
    c = _columns(header, rows)
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for delta in sorted(set(c["delta"])):
        mask = c["delta"] == delta
        order = np.argsort(c["epsilon"][mask])
        eps = c["epsilon"][mask][order]
        axes[0].plot(eps, c["multiplier"][mask][order], marker="o", ms=3,
                     label=f"delta={delta:g}")
        axes[1].plot(eps, c["risk_free_exposure"][mask][order], marker="o",
                     ms=3, label=f"delta={delta:g}")
    axes[0].set_xlabel("carbon aversion")
    axes[0].set_ylabel("initial multiplier")
    axes[1].set_xlabel("carbon aversion")
    axes[1].set_ylabel("risk-free exposure")
    for ax in axes:
        ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_multiplier_paths(header, rows, path) -> None:
    c = _columns(header, rows)
    pairs = [(name, name.replace("full", "partial"))
             for name in header if name.startswith("full_")]
    fig, axes = plt.subplots(1, len(pairs), figsize=(5.5 * len(pairs), 4),
                             squeeze=False)
    for ax, (full_name, part_name) in zip(axes[0], pairs):
        ax.plot(c["t"], c[full_name], color="tab:blue", lw=0.9, label="full information")
        ax.plot(c["t"], c[part_name], color="magenta", ls="--", lw=1.1,
                label="partial information")
        ax.set_title(full_name.replace("full_eps", "epsilon = ").replace("p", "."),
                     fontsize=9)
        ax.set_xlabel("time (years)")
        ax.set_ylabel("multiplier")
        ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_information_premium(header, rows, path) -> None:
    c = _columns(header, rows)
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for delta in sorted(set(c["delta"])):
        mask = c["delta"] == delta
        order = np.argsort(c["epsilon"][mask])
        eps = c["epsilon"][mask][order]
        axes[0].plot(eps, c["loss_of_utility"][mask][order], marker="o", ms=3,
                     label=f"delta={delta:g}")
        axes[1].plot(eps, c["efficiency"][mask][order], marker="o", ms=3,
                     label=f"delta={delta:g}")
    axes[0].set_xlabel("carbon aversion")
    axes[0].set_ylabel("loss of utility")
    axes[1].set_xlabel("carbon aversion")
    axes[1].set_ylabel("efficiency")
    for ax in axes:
        ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_coefficients(header, rows, path) -> None:
    c = _columns(header, rows)
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for name in header[1:]:
        ax.plot(c["t"], c[name], lw=1.1, label=name)
    ax.set_xlabel("time (years)")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
