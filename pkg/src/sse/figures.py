"""Matplotlib rendering for benchmark reports.

Figures are written next to the delimited output: grouped box plots of the
relative MSE per experimental-design size, and a log-log scatter of the
internal error estimate against the validation error.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_METHOD_LABELS = {"sse": "SSE", "pce": "PCE"}
_METHOD_COLORS = {"sse": "tab:blue", "pce": "tab:orange"}


def _grouped(records):
    groups = {}
    for rec in records:
        groups.setdefault((rec.method, rec.n), []).append(rec.eta)
    return groups


def convergence_figure(records, path):
    """Box plots of the relative MSE by design size, one series per method."""
    groups = _grouped(records)
    methods = sorted({m for m, _ in groups})
    sizes = sorted({n for _, n in groups})
    positions = np.arange(len(sizes), dtype=float)
    width = 0.3 if len(methods) > 1 else 0.45

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for k, method in enumerate(methods):
        offset = (k - 0.5 * (len(methods) - 1)) * 2.0 * width * 0.6
        data = [groups.get((method, n), [np.nan]) for n in sizes]
        color = _METHOD_COLORS.get(method, f"C{k}")
        box = ax.boxplot(
            data,
            positions=positions + offset,
            widths=width,
            patch_artist=True,
            manage_ticks=False,
        )
        for patch in box["boxes"]:
            patch.set_facecolor(color)
            patch.set_alpha(0.55)
        for med in box["medians"]:
            med.set_color("black")
        ax.plot([], [], color=color, label=_METHOD_LABELS.get(method, method))
    ax.set_yscale("log")
    ax.set_xticks(positions)
    ax.set_xticklabels([str(n) for n in sizes])
    ax.set_xlabel("experimental design size N")
    ax.set_ylabel("relative MSE")
    case = records[0].case if records else ""
    ax.set_title(f"convergence: {case}")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def estimator_figure(records, path):
    """Scatter of the error estimate against the validation error (log-log)."""
    fig, ax = plt.subplots(figsize=(5.2, 5.0))
    floor = 1e-300
    lo, hi = np.inf, -np.inf
    for method in sorted({rec.method for rec in records}):
        eta = np.array([max(r.eta, floor) for r in records if r.method == method])
        eps = np.array([max(r.eps_gen_hat, floor) for r in records if r.method == method])
        ax.scatter(
            eta,
            eps,
            s=18,
            alpha=0.7,
            color=_METHOD_COLORS.get(method, None),
            label=_METHOD_LABELS.get(method, method),
        )
        lo = min(lo, eta.min(), eps.min())
        hi = max(hi, eta.max(), eps.max())
    if np.isfinite(lo) and np.isfinite(hi):
        span = np.array([lo * 0.5, hi * 2.0])
        ax.plot(span, span, "k--", linewidth=1.0, label="perfect estimation")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("validation relative MSE")
    ax.set_ylabel("relative error estimate")
    case = records[0].case if records else ""
    ax.set_title(f"error estimator: {case}")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
