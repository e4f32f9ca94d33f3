"""Small statistical helpers shared by the experiment modules."""

from __future__ import annotations

import math

import numpy as np

__all__ = ["wilson_interval", "fit_line", "bootstrap_slope_ci"]


def wilson_interval(successes: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        return 0.0, 1.0
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1.0 - p) / trials + z * z / (4.0 * trials * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def fit_line(xs, ys) -> dict:
    """Least-squares line fit returning slope, intercept and R^2."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if len(x) < 2:
        raise ValueError("need at least two points to fit a line")
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return {"slope": float(slope), "intercept": float(intercept), "r2": r2}


def bootstrap_slope_ci(xs, samples_per_x, rng, n_boot: int = 1000,
                       level: float = 0.95, statistic=np.median) -> tuple[float, float]:
    """Percentile bootstrap CI for the slope of statistic(samples) vs x.

    ``samples_per_x`` is a list of 1-d arrays aligned with ``xs``; each
    bootstrap round resamples every array with replacement, recomputes the
    per-x statistic and refits the line.
    """
    xs = np.asarray(xs, dtype=np.float64)
    slopes = np.empty(n_boot)
    for b in range(n_boot):
        ys = []
        for arr in samples_per_x:
            arr = np.asarray(arr)
            idx = rng.integers(0, len(arr), size=len(arr))
            ys.append(statistic(arr[idx]))
        slopes[b] = np.polyfit(xs, np.asarray(ys), 1)[0]
    alpha = (1.0 - level) / 2.0
    return (float(np.quantile(slopes, alpha)),
            float(np.quantile(slopes, 1.0 - alpha)))
