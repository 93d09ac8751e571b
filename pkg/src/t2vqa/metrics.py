"""Correlation metrics between predicted scores and MOS.

SROCC uses average ranks for ties, KRCC is tau-b; both are computed on raw
predictions since rank metrics are invariant to monotone mappings.  PLCC
and RMSE are meant to run on logistically mapped predictions.
"""

from __future__ import annotations

import numpy as np
from scipy import stats


class UndefinedCorrelationError(ValueError):
    """Correlation is undefined (constant input or fewer than 2 points)."""


def _check_pair(x, y, name: str) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
        raise ValueError(f"{name} expects two 1-D arrays of equal length")
    return x, y


def _check_variance(x: np.ndarray, y: np.ndarray, name: str) -> None:
    if len(x) < 2:
        raise UndefinedCorrelationError(f"{name} needs at least 2 points")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise UndefinedCorrelationError(f"{name} is undefined for constant input")


def srocc(x, y) -> float:
    """Spearman rank correlation (average ranks for ties)."""
    x, y = _check_pair(x, y, "srocc")
    _check_variance(x, y, "srocc")
    return float(stats.spearmanr(x, y).statistic)


def krcc(x, y) -> float:
    """Kendall rank correlation, tau-b (tie corrected)."""
    x, y = _check_pair(x, y, "krcc")
    _check_variance(x, y, "krcc")
    return float(stats.kendalltau(x, y).statistic)


def plcc(x, y) -> float:
    """Pearson linear correlation."""
    x, y = _check_pair(x, y, "plcc")
    _check_variance(x, y, "plcc")
    return float(stats.pearsonr(x, y).statistic)


def rmse(x, y) -> float:
    """Root mean squared error."""
    x, y = _check_pair(x, y, "rmse")
    if len(x) == 0:
        raise ValueError("rmse needs at least 1 point")
    return float(np.sqrt(np.mean((x - y) ** 2)))
