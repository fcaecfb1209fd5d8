"""Render summary figures from a results CSV.

Each experiment kind gets a matching plot family: budget sweeps become
median/IQR line plots, grids become per-family boxplots, the stability
sweep an error-bar chart, and bound tables the classic bound-versus-rank
curves.  Figures land as PNG files next to the CSV (or in ``outdir``).
"""

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from .harness import BOUNDS_COLUMNS
from .sketch import ConfigError

__all__ = ["render_report"]

_METHOD_ORDER = ["ssvd", "xdiag", "lor_then_d", "d_then_lor", "sketchlord"]

_LABELS = {
    "ssvd": "low-rank (SSVD)",
    "xdiag": "diagonal (XDiag)",
    "lor_then_d": "LoR -> D",
    "d_then_lor": "D -> LoR",
    "sketchlord": "joint (sketchlord)",
}


def _ok(df):
    return df[df["status"] == "ok"]


def _save(fig, outdir, stem, name, paths):
    path = os.path.join(outdir, f"{stem}_{name}.png")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    paths.append(path)


def _plot_toy(df, outdir, stem, paths):
    for recovery, sub in _ok(df).groupby("recovery"):
        fig, ax = plt.subplots(figsize=(6, 4))
        for method in _METHOD_ORDER:
            rows = sub[sub["method"] == method]
            if rows.empty:
                continue
            stats = rows.groupby("p_budget")["rho_total"].quantile([0.25, 0.5, 0.75]).unstack()
            ax.plot(stats.index, stats[0.5], marker="o", label=_LABELS.get(method, method))
            ax.fill_between(stats.index, stats[0.25], stats[0.75], alpha=0.2)
        ax.axhline(1.0, color="k", linestyle="--", linewidth=0.8)
        ax.set_yscale("log")
        ax.set_xlabel("measurement budget")
        ax.set_ylabel(r"residual energy $\rho^2$")
        ax.set_title(f"toy operator, {recovery} recovery")
        ax.legend(fontsize=8)
        _save(fig, outdir, stem, f"toy_{recovery}", paths)


def _plot_grid(df, outdir, stem, paths, column="rho_total"):
    ok = _ok(df).copy()
    ok["family_t"] = ok["family"] + "(" + ok["t"].astype(str) + ")"
    families = sorted(ok["family_t"].unique())
    methods = [m for m in _METHOD_ORDER if m in set(ok["method"])]
    for xi, sub in ok.groupby("xi"):
        fig, ax = plt.subplots(figsize=(1.5 + 1.4 * len(families), 4))
        width = 0.8 / max(len(methods), 1)
        for mi, method in enumerate(methods):
            data = [
                sub[(sub["family_t"] == fam) & (sub["method"] == method)][column].values
                for fam in families
            ]
            positions = np.arange(len(families)) + (mi - (len(methods) - 1) / 2) * width
            bp = ax.boxplot(
                data,
                positions=positions,
                widths=width * 0.9,
                patch_artist=True,
                showfliers=False,
                medianprops={"color": "black"},
            )
            color = plt.get_cmap("tab10")(mi)
            for box in bp["boxes"]:
                box.set_facecolor(color)
            ax.plot([], [], color=color, label=_LABELS.get(method, method))
        ax.axhspan(1.0, ax.get_ylim()[1] if ax.get_ylim()[1] > 1 else 10, color="red", alpha=0.07)
        ax.set_yscale("log")
        ax.set_xticks(np.arange(len(families)))
        ax.set_xticklabels(families, rotation=20)
        ax.set_ylabel(column)
        ax.set_title(f"xi = {xi}")
        ax.legend(fontsize=8)
        _save(fig, outdir, stem, f"grid_{column}_xi{xi}", paths)


def _plot_stability(df, outdir, stem, paths):
    ok = _ok(df).copy()
    ok["config"] = (
        "eta=" + ok["eta"].astype(str)
        + " lam=" + ok["lambda"].astype(str)
        + " mu=" + ok["mu"].astype(str)
    )
    fig, axes = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    grouped = ok.groupby("config", sort=False)
    labels = list(grouped.groups)
    x = np.arange(len(labels))
    for ax, column in zip(axes, ("rho_total", "iterations")):
        med = grouped[column].median()
        lo = grouped[column].quantile(0.25)
        hi = grouped[column].quantile(0.75)
        ax.errorbar(
            x,
            med.values,
            yerr=[(med - lo).values, (hi - med).values],
            fmt="o",
            capsize=3,
        )
        ax.set_ylabel(column)
        if column == "rho_total":
            ax.set_yscale("log")
    axes[1].set_xticks(x)
    axes[1].set_xticklabels(labels, rotation=60, ha="right", fontsize=7)
    _save(fig, outdir, stem, "stability", paths)


def _plot_bounds(df, outdir, stem, paths):
    fig, ax = plt.subplots(figsize=(6, 4))
    for col, label in (
        ("rho_d", "diagonal only"),
        ("rho_lor", "rank-k only"),
        ("rho_d_then_lor", "D -> LoR"),
        ("rho_lor_then_d", "LoR -> D"),
    ):
        ax.plot(df["k"], df[col], label=label)
    ax.set_yscale("log")
    ax.set_xlabel("rank k")
    ax.set_ylabel(r"best-case $\rho^2$")
    ax.set_title(f"recovery bounds, N = {int(df['N'].iloc[0])}")
    ax.legend(fontsize=8)
    _save(fig, outdir, stem, "bounds", paths)


def render_report(csv_path, outdir=None):
    """Render the figures for one results CSV; returns the PNG paths."""
    df = pd.read_csv(csv_path)
    outdir = outdir or (os.path.dirname(os.path.abspath(csv_path)) or ".")
    os.makedirs(outdir, exist_ok=True)
    stem = os.path.splitext(os.path.basename(csv_path))[0]
    paths = []
    if list(df.columns) == BOUNDS_COLUMNS:
        _plot_bounds(df, outdir, stem, paths)
        return paths
    if "experiment" not in df.columns or df.empty:
        raise ConfigError(f"{csv_path} is not a recognized results file")
    experiment = df["experiment"].iloc[0]
    if experiment == "toy":
        _plot_toy(df, outdir, stem, paths)
    elif experiment == "grid":
        _plot_grid(df, outdir, stem, paths, column="rho_total")
        _plot_grid(df, outdir, stem, paths, column="rho_diag")
    elif experiment == "stability":
        _plot_stability(df, outdir, stem, paths)
    else:  # single rows: one bar per method/recovery
        ok = _ok(df)
        fig, ax = plt.subplots(figsize=(5, 3.5))
        labels = ok["method"] + "/" + ok["recovery"]
        ax.bar(labels, ok["rho_total"])
        ax.set_yscale("log")
        ax.set_ylabel(r"$\rho^2$")
        _save(fig, outdir, stem, "single", paths)
    return paths
