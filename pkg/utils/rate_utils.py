import logging
from typing import NamedTuple, Tuple

import numpy as np

from utils.error_utils import DomainError, RateFitError

MIN_FIT_POINTS = 3


class RateEstimate(NamedTuple):
    exponent: float          # decay exponent r in err ~ n^{-r}
    intercept: float
    rms_residual: float
    n_points: int
    window: Tuple[int, int]
    excluded: int = 0


class AggregatedCurve(NamedTuple):
    n: np.ndarray
    value: np.ndarray
    std: np.ndarray
    trials: int
    reducer: str


def _split_curve(curve):
    if isinstance(curve, AggregatedCurve):
        return np.asarray(curve.n, dtype=np.float64), np.asarray(curve.value, dtype=np.float64)
    arr = np.asarray(curve, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DomainError("a curve is a sequence of (n, err) pairs")
    return arr[:, 0], arr[:, 1]


def fit_rate(curve, window=None):
    """
    Least squares of log err = -r log n + b over the points inside ``window``.
    Non-positive (or non-finite) errors inside the window are dropped with a
    warning; fewer than three survivors is an error.
    """
    n, err = _split_curve(curve)
    inside = np.ones_like(n, dtype=bool)
    if window is not None:
        inside = (n >= window[0]) & (n <= window[1])
    usable = inside & np.isfinite(err) & (err > 0)
    excluded = int(inside.sum() - usable.sum())
    if excluded > 0:
        logging.warning("fit_rate: excluded {} non-positive points".format(excluded))
    if usable.sum() < MIN_FIT_POINTS:
        raise RateFitError(f"need at least {MIN_FIT_POINTS} positive points, got {int(usable.sum())}")

    log_n = np.log(n[usable])
    log_err = np.log(err[usable])
    slope, intercept = np.polyfit(log_n, log_err, 1)
    residual = log_err - (slope * log_n + intercept)
    return RateEstimate(
        exponent=float(-slope),
        intercept=float(intercept),
        rms_residual=float(np.sqrt(np.mean(residual ** 2))),
        n_points=int(usable.sum()),
        window=(int(n[usable].min()), int(n[usable].max())),
        excluded=excluded,
    )


def upper_half_window(n_values, window=None):
    n_values = np.sort(np.asarray(n_values))
    if window is not None:
        n_values = n_values[(n_values >= window[0]) & (n_values <= window[1])]
    upper = n_values[len(n_values) // 2:]
    return (int(upper[0]), int(upper[-1]))


def fit_window_pair(curve, window=None):
    """Full-window fit plus the upper-half refit used to spot pre-asymptotic transients."""
    n, _ = _split_curve(curve)
    full = fit_rate(curve, window)
    upper = fit_rate(curve, upper_half_window(n, window))
    return full, upper


def aggregate_trials(curves, reducer="mean"):
    """
    Pointwise reduction of per-trial curves sharing one n-grid.

    curves: sequence of curves, each a sequence of (n, err) pairs.
    """
    if len(curves) == 0:
        raise DomainError("no trials to aggregate")
    grids = []
    values = []
    for curve in curves:
        n, err = _split_curve(curve)
        grids.append(n)
        values.append(err)
    for grid in grids[1:]:
        if grid.shape != grids[0].shape or not np.array_equal(grid, grids[0]):
            raise DomainError("trials do not share the same n-grid")
    values = np.stack(values, axis=0)

    if reducer == "mean":
        value = np.nanmean(values, axis=0)
    elif reducer == "median":
        value = np.nanmedian(values, axis=0)
    else:
        raise DomainError(f"unknown reducer {reducer!r}")
    ddof = 1 if values.shape[0] > 1 else 0
    std = np.nanstd(values, axis=0, ddof=ddof)
    return AggregatedCurve(n=grids[0], value=value, std=std, trials=values.shape[0], reducer=reducer)
