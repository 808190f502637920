from datetime import timedelta

import numpy as np
import pytest
from conftest import T0
from oracles import local_level_posterior, run_length_gaps

from footfall_lab.clean import FootfallSeries
from footfall_lab.errors import InsufficientData, InvalidParameter
from footfall_lab.impute import (
    Gap,
    LocalLevelModel,
    detect_gaps,
    fit_local_level,
    impute_gaps,
    kalman_filter,
    kalman_smooth,
)


def _series(values):
    return FootfallSeries("S1", T0, np.asarray(values, float))


def local_level_fixture(n, level_var, obs_var, seed, start=50.0):
    rng = np.random.default_rng(seed)
    level = start + np.cumsum(rng.normal(0, np.sqrt(level_var), n))
    return level + rng.normal(0, np.sqrt(obs_var), n)


def test_no_gaps():
    assert detect_gaps(_series(np.arange(10.0))) == []


def test_single_gap():
    v = np.arange(10.0)
    v[5] = np.nan
    assert detect_gaps(_series(v)) == [Gap("S1", 5, 1)]


def test_two_gaps_match_run_length_oracle():
    v = np.ones(12)
    v[3:6] = np.nan
    v[9] = np.nan
    got = detect_gaps(_series(v))
    assert got == [Gap("S1", 3, 3), Gap("S1", 9, 1)]
    assert [(g.start_slot, g.length_slots) for g in got] == run_length_gaps(np.isnan(v).tolist())


def test_edge_gaps_flagged():
    v = np.ones(8)
    v[:2] = np.nan
    v[-1] = np.nan
    assert [g.edge for g in detect_gaps(_series(v))] == [True, True]


def test_fit_static_level_gives_small_q():
    y = 40.0 + np.random.default_rng(1).normal(0, 1.0, 500)
    assert fit_local_level(_series(y)).q < 1e-3


def test_fit_random_walk_gives_large_q():
    # with no observation noise the likelihood is flat in q above a finite
    # maximiser, so the fit lands high but not always on the bound
    log_q = [fit_local_level(40.0 + np.cumsum(np.random.default_rng(s).normal(0, 1.0, 500))).log_q
             for s in range(10)]
    assert min(log_q) > 1.0
    assert np.median(log_q) > 3.0


def test_fit_recovers_known_ratio():
    y = local_level_fixture(3000, 0.5, 2.0, seed=3)
    model = fit_local_level(y)
    assert abs(model.log_q - np.log(0.25)) < 0.5
    assert abs(model.obs_variance - 2.0) < 0.4


def test_fit_needs_thirty_points():
    with pytest.raises(InsufficientData):
        fit_local_level(_series(np.r_[np.ones(29), np.full(10, np.nan)]))


def test_model_validates_variances():
    with pytest.raises(InvalidParameter):
        LocalLevelModel(1.0, 0.0)
    with pytest.raises(InvalidParameter):
        LocalLevelModel(-1.0, 1.0)


def _with_gap(length, n=200, at=100):
    y = local_level_fixture(n, 0.5, 1.0, seed=4)
    v = y.copy()
    v[at : at + length] = np.nan
    return _series(v)


MODEL = LocalLevelModel(0.5, 1.0)


def test_gap_of_25_minutes_filled():
    out = impute_gaps(_with_gap(5), MODEL)
    assert not out.missing.any()


def test_gap_of_exactly_30_minutes_not_filled():
    s = _with_gap(6)
    out = impute_gaps(s, MODEL)
    assert out.missing.sum() == 6
    assert out.equals(s)


def test_longer_gap_not_filled():
    assert impute_gaps(_with_gap(7), MODEL).missing.sum() == 7


def test_edge_gap_not_filled():
    v = np.r_[np.full(2, np.nan), np.ones(40)]
    assert impute_gaps(_series(v), MODEL).missing.sum() == 2


def test_threshold_is_configurable():
    assert not impute_gaps(_with_gap(6), MODEL, max_gap=1801).missing.any()


def test_no_gap_is_identity():
    s = _series(local_level_fixture(100, 0.5, 1.0, seed=5))
    assert impute_gaps(s).equals(s)


def test_filled_values_are_non_negative():
    v = np.r_[np.full(20, 0.2), np.nan, np.nan, np.full(20, 0.1)]
    out = impute_gaps(_series(v), LocalLevelModel(1.0, 1.0))
    assert (out.values >= 0).all()


def test_imputation_is_idempotent_and_preserves_present_values():
    s = _with_gap(3)
    once = impute_gaps(s, MODEL)
    assert once.equals(impute_gaps(once, MODEL))
    present = ~s.missing
    assert np.array_equal(once.values[present], s.values[present])


def _leave_out_rmse(seed):
    rng = np.random.default_rng(seed)
    y = local_level_fixture(1000, 0.5, 1.0, seed=seed)
    idx = np.sort(rng.choice(np.arange(1, 999), 50, replace=False))
    v = y.copy()
    v[idx] = np.nan
    level, _ = kalman_smooth(v, 0.5, 1.0)
    keep = np.flatnonzero(~np.isnan(v))
    linear = np.interp(idx, keep, v[keep])
    return np.sqrt(np.mean((level[idx] - y[idx]) ** 2)), np.sqrt(np.mean((linear - y[idx]) ** 2))


@pytest.mark.parametrize("seed", range(5))
def test_leave_out_rmse_not_worse_than_linear(seed):
    smooth, linear = _leave_out_rmse(seed)
    assert smooth <= linear


def test_three_point_posterior():
    y = [3.0, 5.0, 4.0]
    level, _ = kalman_smooth(y, 0.7, 1.3, init_mean=2.0, init_var=4.0)
    expected = local_level_posterior(y, 0.7, 1.3, 2.0, 4.0)
    np.testing.assert_allclose(level, expected, rtol=0, atol=1e-10)


def test_three_point_posterior_with_missing_middle():
    level, _ = kalman_smooth([3.0, np.nan, 4.0], 0.7, 1.3, init_mean=2.0, init_var=4.0)
    # closed form: condition the joint Gaussian of (x0, x1, x2) on y0 and y2
    idx = np.arange(3)
    cov_x = 4.0 + 0.7 * np.minimum.outer(idx, idx)
    obs = [0, 2]
    cov_y = cov_x[np.ix_(obs, obs)] + 1.3 * np.eye(2)
    expected = 2.0 + cov_x[:, obs] @ np.linalg.solve(cov_y, np.array([3.0, 4.0]) - 2.0)
    np.testing.assert_allclose(level, expected, rtol=0, atol=1e-10)


def test_diffuse_start_matches_posterior_with_huge_prior():
    y = local_level_fixture(20, 0.3, 1.0, seed=6)
    level, _ = kalman_smooth(y, 0.3, 1.0)
    expected = local_level_posterior(y, 0.3, 1.0, 0.0, 1e9)
    np.testing.assert_allclose(level, expected, atol=1e-5)


def test_filter_everything_missing():
    *_, first = kalman_filter(np.full(5, np.nan), 1.0, 1.0)
    assert first == 5


def test_series_step_is_respected():
    s = FootfallSeries("S1", T0 + timedelta(minutes=5), np.r_[np.ones(5), np.nan, np.ones(5)], step=3600)
    assert impute_gaps(s, MODEL).missing.sum() == 1
