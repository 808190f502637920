"""Gap detection and Kalman-smoother imputation on a local-level model.

The local-level (random walk plus noise) model is

    y[t] = mu[t] + eps[t],      eps ~ N(0, obs_variance)
    mu[t+1] = mu[t] + xi[t],    xi ~ N(0, level_variance)

The level is initialised diffusely at the first present observation, which
for this model is exact: the filtered state after the first observation is
``N(y[first], obs_variance)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .clean import FootfallSeries
from .errors import InsufficientData, InvalidParameter

MIN_FIT_POINTS = 30
LOG_Q_BOUNDS = (-8.0, 8.0)
MAX_GAP_SECONDS = 1800


@dataclass(frozen=True)
class Gap:
    series_id: str
    start_slot: int
    length_slots: int
    edge: bool = False

    @property
    def stop_slot(self):
        return self.start_slot + self.length_slots


@dataclass(frozen=True)
class LocalLevelModel:
    level_variance: float
    obs_variance: float
    log_q: float = float("nan")
    loglik: float = float("nan")

    def __post_init__(self):
        if not self.obs_variance > 0:
            raise InvalidParameter("obs_variance must be positive")
        if not self.level_variance >= 0:
            raise InvalidParameter("level_variance must be non-negative")

    @property
    def q(self):
        return self.level_variance / self.obs_variance


def detect_gaps(series: FootfallSeries) -> list[Gap]:
    """Return maximal runs of MISSING slots; runs touching either end are edge gaps."""
    missing = np.isnan(series.values)
    if not missing.any():
        return []
    padded = np.concatenate(([False], missing, [False])).astype(np.int8)
    diff = np.diff(padded)
    starts = np.flatnonzero(diff == 1)
    stops = np.flatnonzero(diff == -1)
    n = len(series)
    return [
        Gap(series.sensor_id, int(a), int(b - a), edge=bool(a == 0 or b == n))
        for a, b in zip(starts, stops)
    ]


def kalman_filter(y, level_var, obs_var, init_mean=None, init_var=None):
    """Run the local-level Kalman filter.

    Returns ``(a_pred, p_pred, a_filt, p_filt, first)`` where ``first`` is the
    first filtered slot. With ``init_mean=None`` the level is diffuse and
    filtering starts at the first present observation; earlier slots are NaN.
    Otherwise ``(init_mean, init_var)`` is the prior on the level at slot 0.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    a_pred = np.full(n, np.nan)
    p_pred = np.full(n, np.nan)
    a_filt = np.full(n, np.nan)
    p_filt = np.full(n, np.nan)
    if init_mean is None:
        present = np.flatnonzero(~np.isnan(y))
        if present.size == 0:
            return a_pred, p_pred, a_filt, p_filt, n
        first = int(present[0])
        a, p = float(y[first]), float(obs_var)
        a_pred[first], p_pred[first] = a, math.inf
        a_filt[first], p_filt[first] = a, p
        begin = first + 1
        p += level_var
    else:
        first = begin = 0
        a, p = float(init_mean), float(init_var)

    yl = y.tolist()
    for t in range(begin, n):
        a_pred[t] = a
        p_pred[t] = p
        yt = yl[t]
        if yt == yt:
            f = p + obs_var
            k = p / f
            a = a + k * (yt - a)
            p = p * (1.0 - k)
        a_filt[t] = a
        p_filt[t] = p
        p += level_var
    return a_pred, p_pred, a_filt, p_filt, first


def kalman_smooth(y, level_var, obs_var, init_mean=None, init_var=None):
    """Rauch-Tung-Striebel smoothed level means and variances.

    Slots before the first present observation (diffuse case) are NaN.
    """
    a_pred, p_pred, a_filt, p_filt, first = kalman_filter(y, level_var, obs_var, init_mean, init_var)
    n = a_filt.size
    a_s = a_filt.copy()
    p_s = p_filt.copy()
    if first >= n:
        return a_s, p_s
    af, pf, ap, pp = a_filt.tolist(), p_filt.tolist(), a_pred.tolist(), p_pred.tolist()
    ms, vs = af[n - 1], pf[n - 1]
    for t in range(n - 2, first - 1, -1):
        j = pf[t] / pp[t + 1]
        ms = af[t] + j * (ms - ap[t + 1])
        vs = pf[t] + j * j * (vs - pp[t + 1])
        a_s[t] = ms
        p_s[t] = vs
    return a_s, p_s


def _concentrated_loglik(y, q):
    """Profile log-likelihood over obs_variance for signal-to-noise ratio ``q``.

    Returns ``(loglik, sigma2_hat)``; the first present observation is the
    diffuse initialisation and carries no likelihood.
    """
    a = None
    p = 1.0
    ss = 0.0
    logf = 0.0
    m = 0
    for yt in y:
        if a is None:
            if yt == yt:
                a, p = yt, 1.0
            continue
        p += q
        if yt == yt:
            f = p + 1.0
            v = yt - a
            ss += v * v / f
            logf += math.log(f)
            m += 1
            k = p / f
            a += k * v
            p *= 1.0 - k
    sigma2 = ss / m
    if sigma2 <= 0:
        return math.inf, 0.0
    return -0.5 * m * (math.log(2 * math.pi * sigma2) + 1.0) - 0.5 * logf, sigma2


def fit_local_level(series: FootfallSeries | np.ndarray) -> LocalLevelModel:
    """Maximum-likelihood fit of the local-level model.

    Searches the natural log of ``q = level_variance / obs_variance`` over
    ``[-8, 8]`` (coarse grid, then bounded Brent refinement); the observation
    variance is the concentrated-likelihood estimate at the optimum.
    """
    values = series.values if isinstance(series, FootfallSeries) else np.asarray(series, float)
    n_present = int(np.count_nonzero(~np.isnan(values)))
    if n_present < MIN_FIT_POINTS:
        raise InsufficientData(f"need at least {MIN_FIT_POINTS} present values, got {n_present}")
    y = values.tolist()
    lo, hi = LOG_Q_BOUNDS

    def objective(log_q):
        ll, _ = _concentrated_loglik(y, math.exp(log_q))
        return -ll

    grid = np.linspace(lo, hi, 17)
    scores = [objective(g) for g in grid]
    best = int(np.argmin(scores))
    if math.isinf(scores[best]):
        # exactly constant series; no noise to attribute
        spread = float(np.nanmax(np.abs(values))) or 1.0
        return LocalLevelModel(0.0, 1e-12 * spread * spread, lo, math.inf)
    a, b = grid[max(best - 1, 0)], grid[min(best + 1, grid.size - 1)]
    res = minimize_scalar(objective, bounds=(a, b), method="bounded", options={"xatol": 1e-6})
    log_q = float(res.x) if res.fun <= scores[best] else float(grid[best])
    ll, sigma2 = _concentrated_loglik(y, math.exp(log_q))
    return LocalLevelModel(math.exp(log_q) * sigma2, sigma2, log_q, ll)


def impute_gaps(
    series: FootfallSeries, model: LocalLevelModel | None = None, max_gap=MAX_GAP_SECONDS
) -> FootfallSeries:
    """Fill interior gaps strictly shorter than ``max_gap`` seconds.

    Filled values are the smoothed level, clamped at zero. Edge gaps and long
    gaps stay MISSING, and present values are copied untouched.
    """
    out = series.values.copy()
    fillable = [g for g in detect_gaps(series) if not g.edge and g.length_slots * series.step < max_gap]
    if fillable:
        if model is None:
            model = fit_local_level(series)
        level, _ = kalman_smooth(series.values, model.level_variance, model.obs_variance)
        for g in fillable:
            out[g.start_slot : g.stop_slot] = np.maximum(level[g.start_slot : g.stop_slot], 0.0)
    return FootfallSeries(series.sensor_id, series.start, out, series.step)
