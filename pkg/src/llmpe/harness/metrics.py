"""Learning metrics and run-level statistics.

The centered metrics compare predictions and truth after removing each
one's mean, so a model that is right up to a constant scores perfectly.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import stats

METRIC_NAMES = ("mae_c", "mse_c", "r2_c", "kendall_tau")


def _centered_residual(pred, true) -> np.ndarray:
    pred = np.asarray(pred, dtype=float)
    true = np.asarray(true, dtype=float)
    if pred.shape != true.shape or pred.ndim != 1:
        raise ValueError("pred and true must be 1-D arrays of equal length")
    if len(pred) == 0:
        raise ValueError("metrics need at least one value")
    return (pred - pred.mean()) - (true - true.mean())


def centered_mae(pred, true) -> float:
    return float(np.mean(np.abs(_centered_residual(pred, true))))


def centered_mse(pred, true) -> float:
    return float(np.mean(_centered_residual(pred, true) ** 2))


def centered_r2(pred, true) -> float:
    """``1 - SS(centered residual) / SS(true about its mean)``; NaN if truth is constant."""
    r = _centered_residual(pred, true)
    true = np.asarray(true, dtype=float)
    ss_tot = float(np.sum((true - true.mean()) ** 2))
    if ss_tot == 0.0:
        return float("nan")
    return 1.0 - float(np.sum(r ** 2)) / ss_tot


def kendall_tau(pred, true) -> float:
    """Tie-corrected Kendall tau-b; NaN when either side is constant."""
    pred = np.asarray(pred, dtype=float)
    true = np.asarray(true, dtype=float)
    if len(pred) < 2:
        return float("nan")
    return float(stats.kendalltau(pred, true, variant="b").statistic)


def top_fraction_index(true, fraction: float) -> np.ndarray:
    """Indices of the ``fraction`` of entries with the highest true value.

    Ties are broken by position, so smaller fractions give nested subsets.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    true = np.asarray(true, dtype=float)
    k = max(1, int(math.ceil(fraction * len(true) - 1e-9)))
    order = np.argsort(-true, kind="stable")
    return np.sort(order[:k])


def learning_metrics(pred, true) -> dict:
    return {"mae_c": centered_mae(pred, true), "mse_c": centered_mse(pred, true),
            "r2_c": centered_r2(pred, true), "kendall_tau": kendall_tau(pred, true)}


def quantile_slice(pred, true, fraction: float) -> dict:
    """Every learning metric restricted to the top ``fraction`` of bundles by true value."""
    idx = top_fraction_index(true, fraction)
    return learning_metrics(np.asarray(pred)[idx], np.asarray(true)[idx])


def summarize(values, baseline: float = 100.0) -> dict:
    """Mean, 95% t-interval half-width, share above/below ``baseline`` and
    the one-sided t-test p-value for a mean above ``baseline``.

    One value gives a zero-width interval and p = 1; zero spread gives
    p = 0 if the common value beats the baseline and 1 otherwise.
    """
    x = np.asarray(values, dtype=float)
    n = len(x)
    if n == 0:
        raise ValueError("cannot summarize an empty sample")
    mean = float(x.mean())
    out = {"n": n, "mean": mean, "ci95": 0.0, "pct_better": 100.0 * float(np.mean(x > baseline)),
           "pct_worse": 100.0 * float(np.mean(x < baseline)), "p_value": 1.0}
    if n < 2:
        return out
    sd = float(x.std(ddof=1))
    if sd == 0.0:
        out["p_value"] = 0.0 if mean > baseline else 1.0
        return out
    se = sd / math.sqrt(n)
    out["ci95"] = float(stats.t.ppf(0.975, n - 1) * se)
    out["p_value"] = float(stats.t.sf((mean - baseline) / se, n - 1))
    return out


def paired_p_value(a, b) -> float:
    """One-sided paired t-test p-value for ``mean(a - b) > 0``."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return summarize(d, baseline=0.0)["p_value"]
