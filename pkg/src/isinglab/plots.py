"""Figure rendering for the CLI report paths (Agg backend, files only)."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

__all__ = ["scan_figure", "coupling_histogram", "gw_figure", "decay_figure"]

_STYLE = {
    "figure.figsize": (6.4, 4.2),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
}


def _new_axes():
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
    return fig, ax


def scan_figure(cells, path) -> None:
    """Median coupling time vs n, one series per beta, with an n ln n guide."""
    fig, ax = _new_axes()
    betas = sorted({c["beta"] for c in cells})
    for beta in betas:
        pts = sorted((c["n"], c) for c in cells
                     if c["beta"] == beta and c["median"] is not None)
        if not pts:
            continue
        ns = [n for n, _ in pts]
        med = [c["median"] for _, c in pts]
        lo = [c["median_ci"][0] if c["median_ci"] else m for (_, c), m in zip(pts, med)]
        hi = [c["median_ci"][1] if c["median_ci"] else m for (_, c), m in zip(pts, med)]
        ax.errorbar(ns, med,
                    yerr=[[m - a for m, a in zip(med, lo)],
                          [b - m for m, b in zip(med, hi)]],
                    marker="o", capsize=3, label=f"beta={beta:g}")
        ref = [med[0] * (n * math.log(n)) / (ns[0] * math.log(ns[0])) for n in ns]
        ax.plot(ns, ref, "--", alpha=0.5, label=f"n ln n (scaled, beta={beta:g})")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("median coupling time")
    ax.legend(fontsize=7)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def coupling_histogram(times, censored: int, path) -> None:
    fig, ax = _new_axes()
    if times:
        ax.hist(times, bins=min(40, max(5, len(times) // 20)), color="steelblue")
    ax.set_xlabel("coupling time")
    ax.set_ylabel("replicas")
    title = f"{len(times)} coupled"
    if censored:
        title += f", {censored} censored at horizon"
    ax.set_title(title)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def gw_figure(depths, means, fit, path) -> None:
    """Mean cut-width bound vs depth with the fitted line."""
    fig, ax = _new_axes()
    ax.plot(depths, means, "o", color="darkred", label="mean cut-width bound")
    if fit is not None:
        xs = [min(depths), max(depths)]
        ax.plot(xs, [fit["slope"] * x + fit["intercept"] for x in xs], "-",
                alpha=0.7,
                label=f"fit: {fit['slope']:.3f} l + {fit['intercept']:.3f} "
                      f"(R2={fit['r2']:.4f})")
    ax.set_xlabel("tree depth")
    ax.set_ylabel("mean cut-width")
    ax.legend(fontsize=7)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def decay_figure(curve, path) -> None:
    """Disagreement decay on a log scale with Wilson bands."""
    fig, ax = _new_axes()
    ax.fill_between(curve.times, curve.wilson_lo, curve.wilson_hi,
                    alpha=0.25, color="steelblue", label="Wilson 95%")
    ax.plot(curve.times, curve.estimate, "o-", color="steelblue",
            label="max_u P(disagree at u)")
    ax.set_yscale("log")
    ax.set_xlabel("continuous time")
    ax.set_ylabel("disagreement probability")
    ax.legend(fontsize=7)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
