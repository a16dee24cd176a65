"""Figure rendering for the report paths (PNG files next to the data)."""

from __future__ import annotations

from math import sqrt

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

BELL_THRESHOLD = 1.0 / sqrt(2.0)


def scan_figure(rows, path) -> None:
    """Visibility against storage time with the Bell-violation threshold."""
    times = [r[0] for r in rows]
    values = [r[1] for r in rows]
    errors = [r[2] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(times, values, yerr=errors, fmt="o-", color="black", capsize=3)
    ax.axhline(BELL_THRESHOLD, linestyle="--", color="gray",
               label=r"Bell threshold $1/\sqrt{2}$")
    ax.set_xlabel(r"storage time ($\mu$s)")
    ax.set_ylabel("visibility")
    ax.set_ylim(0, 1.02)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def chsh_figure(settings, correlations, stderrs, s_value, s_err, path) -> None:
    """Bar chart of the four correlation functions with the resulting S."""
    labels = [f"({a}°, {b}°)" for a, b in settings]
    fig, ax = plt.subplots(figsize=(6, 4))
    x = range(len(labels))
    ax.bar(x, correlations, yerr=stderrs, color="steelblue", capsize=4)
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels)
    ax.set_ylabel(r"correlation $E(\theta_1, \theta_4)$")
    ax.set_ylim(-1.05, 1.05)
    ax.set_title(f"S = {s_value:.3f} $\\pm$ {s_err:.3f}")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def fractions_figure(basis_fractions, path) -> None:
    """Outcome fractions per analysis basis (one panel per basis)."""
    names = list(basis_fractions)
    fig, axes = plt.subplots(1, len(names), figsize=(3 * len(names), 3.2), sharey=True)
    if len(names) == 1:
        axes = [axes]
    outcome_labels = ["++", "+-", "-+", "--"]
    for ax, name in zip(axes, names):
        fractions = basis_fractions[name]
        ax.bar(range(4), fractions, color="indianred")
        ax.set_xticks(range(4))
        ax.set_xticklabels(outcome_labels)
        ax.set_title(name)
        ax.set_ylim(0, 1.0)
    axes[0].set_ylabel("fraction of four-fold events")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
