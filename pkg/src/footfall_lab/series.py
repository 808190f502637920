"""Additive decomposition, correlation measures and pairwise alignment."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import TextIO

import numpy as np
from scipy.stats import rankdata

from .clean import FootfallSeries
from .errors import ConstantInput, ContainsMissing, GridMismatch, LengthMismatch, NoOverlap, TooShort

DAILY_PERIOD = 7
INTRADAY_PERIOD = 288
DEFAULT_COVERAGE = 0.9


@dataclass(eq=False)
class Decomposition:
    """Additive components; ``trend`` and ``residual`` are NaN where the moving average is undefined."""

    observed: np.ndarray
    trend: np.ndarray
    seasonal: np.ndarray
    residual: np.ndarray
    period: int


def decompose_additive(series, period: int) -> Decomposition:
    """Classical additive decomposition by centred moving average.

    Odd periods use a plain ``period``-wide window; even periods use the
    ``2 x period`` filter with half weights on the two end points.
    """
    x = np.asarray(series.values if isinstance(series, FootfallSeries) else series, dtype=float)
    if period < 1:
        raise ValueError("period must be positive")
    if x.size < 2 * period:
        raise TooShort(f"need at least {2 * period} points for period {period}, got {x.size}")
    if np.isnan(x).any():
        raise ContainsMissing("decomposition requires a gap-free series")

    if period % 2:
        weights = np.full(period, 1.0 / period)
    else:
        weights = np.full(period + 1, 1.0 / period)
        weights[0] = weights[-1] = 0.5 / period
    half = weights.size // 2
    trend = np.full(x.size, np.nan)
    trend[half : x.size - half] = np.convolve(x, weights, mode="valid")

    detrended = x - trend
    phase_means = np.array([np.nanmean(detrended[p::period]) for p in range(period)])
    phase_means -= phase_means.mean()
    seasonal = np.resize(phase_means, x.size)
    residual = x - trend - seasonal
    return Decomposition(x, trend, seasonal, residual, period)


def write_decomposition(dec: Decomposition, stream: TextIO):
    def fmt(v):
        return "" if np.isnan(v) else repr(float(v))

    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(("slot", "observed", "trend", "seasonal", "residual"))
    for i in range(dec.observed.size):
        writer.writerow((i, fmt(dec.observed[i]), fmt(dec.trend[i]), fmt(dec.seasonal[i]), fmt(dec.residual[i])))


def _check_pair(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise LengthMismatch(f"lengths differ: {x.size} vs {y.size}")
    if x.size < 3:
        raise TooShort("need at least 3 points")
    return x, y


def pearson(x, y) -> float:
    x, y = _check_pair(x, y)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise ConstantInput("correlation undefined for constant input")
    r = float(dx @ dy) / np.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))


def spearman(x, y) -> float:
    """Pearson correlation of mid-ranks (ties share their average rank)."""
    x, y = _check_pair(x, y)
    return pearson(rankdata(x, method="average"), rankdata(y, method="average"))


@dataclass(eq=False)
class AlignedPair:
    a: np.ndarray
    b: np.ndarray
    slots: np.ndarray
    coverage: float
    start_epoch: int
    step: int


def align_pair(a: FootfallSeries, b: FootfallSeries) -> AlignedPair:
    """Intersect two series' time ranges and drop slots MISSING in either.

    ``slots`` are indices into the intersected grid; ``coverage`` is the kept
    fraction of that grid.
    """
    if a.step != b.step:
        raise GridMismatch(f"steps differ: {a.step} vs {b.step}")
    if (a.start_epoch - b.start_epoch) % a.step:
        raise GridMismatch("series grids are offset")
    lo = max(a.start_epoch, b.start_epoch)
    hi = min(a.start_epoch + len(a) * a.step, b.start_epoch + len(b) * b.step)
    if hi <= lo:
        raise NoOverlap(f"{a.sensor_id} and {b.sensor_id} do not overlap")
    n = (hi - lo) // a.step
    va = a.values[(lo - a.start_epoch) // a.step :][:n]
    vb = b.values[(lo - b.start_epoch) // b.step :][:n]
    keep = ~(np.isnan(va) | np.isnan(vb))
    return AlignedPair(va[keep], vb[keep], np.flatnonzero(keep), keep.sum() / n, lo, a.step)
