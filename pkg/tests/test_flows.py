import io
import random
from datetime import date, timedelta

import numpy as np
import pytest
from conftest import T0
from hypothesis import given, settings
from hypothesis import strategies as st

from footfall_lab.clean import FootfallSeries
from footfall_lab.errors import EmptyInput, OutOfRange, ParameterMismatch
from footfall_lab.flows import (
    FlowDirection,
    FlowParams,
    PairGeometry,
    Quadrant,
    analyze_pairs,
    classify_flow,
    daily_correlations,
    daily_flow_series,
    joint_max_p,
    local_days,
    pair_day_seed,
    preferred_direction,
    quadrant,
    quadrant_membership,
    read_pairs,
    read_te,
    write_pairs,
    write_te,
)
from footfall_lab.info import SurrogateResult
from footfall_lab.synth import generate_coupled_counts


def sr(te, p, lag=1, n=100, surrogates=()):
    return SurrogateResult(te, np.asarray(surrogates, float), p, 0, lag, n)


def test_classify_examples():
    assert classify_flow(sr(0.50, 0.01), sr(0.10, 0.30)) == FlowDirection.A_TO_B
    assert classify_flow(sr(0.20, 0.01), sr(0.20, 0.01)) == FlowDirection.BALANCED
    assert classify_flow(sr(0.02, 0.40), sr(0.01, 0.55)) == FlowDirection.NOT_SIGNIFICANT
    assert classify_flow(sr(0.10, 0.30), sr(0.50, 0.01)) == FlowDirection.B_TO_A


def test_classify_tie_tolerance():
    assert classify_flow(sr(0.2005, 0.01), sr(0.2, 0.01)) == FlowDirection.BALANCED
    assert classify_flow(sr(0.2020, 0.01), sr(0.2, 0.01)) == FlowDirection.A_TO_B


def test_classify_parameter_mismatch():
    with pytest.raises(ParameterMismatch):
        classify_flow(sr(0.5, 0.01, lag=1), sr(0.1, 0.3, lag=2))
    with pytest.raises(ParameterMismatch):
        classify_flow(sr(0.5, 0.01, n=10), sr(0.1, 0.3, n=11))


def test_joint_max_p_uses_paired_maxima():
    ab = sr(0.30, 0.01, surrogates=[0.1, 0.2, 0.35, 0.05])
    ba = sr(0.10, 0.50, surrogates=[0.31, 0.0, 0.1, 0.2])
    # maxima: 0.31, 0.2, 0.35, 0.2 -> two at or above 0.30
    assert joint_max_p(ab, ba) == 3 / 5
    assert classify_flow(ab, ba, alpha=0.5) == FlowDirection.NOT_SIGNIFICANT


@settings(max_examples=200)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_classify_antisymmetric(te_ab, te_ba, p_ab, p_ba):
    a, b = sr(te_ab, p_ab), sr(te_ba, p_ba)
    assert classify_flow(b, a) == classify_flow(a, b).swapped()


def _codes(pcts):
    return [c for c, k in pcts.items() for _ in range(k)]


def test_preferred_examples():
    assert preferred_direction(_codes({1: 55, 2: 40, 0: 5})) == FlowDirection.A_TO_B
    assert preferred_direction(_codes({1: 45, 2: 40, -1: 15})) is None
    assert preferred_direction([2] * 9) == FlowDirection.B_TO_A


def test_preferred_exact_threshold_returns_none():
    assert preferred_direction(_codes({1: 55, 2: 45})) is None
    assert preferred_direction(_codes({1: 56, 2: 44})) == FlowDirection.A_TO_B


def test_preferred_empty():
    with pytest.raises(EmptyInput):
        preferred_direction([])


@settings(max_examples=100)
@given(st.dictionaries(st.sampled_from([-1, 0, 1, 2]), st.integers(1, 30), min_size=1), st.integers(2, 5))
def test_preferred_scale_invariant(counts, k):
    scaled = {c: n * k for c, n in counts.items()}
    assert preferred_direction(_codes(counts)) == preferred_direction(_codes(scaled))


def test_quadrant_examples():
    assert quadrant(200, 0.8) is Quadrant.I
    assert quadrant(100, 0.8) is Quadrant.II
    assert quadrant(150, 0.5) is Quadrant.III
    assert quadrant(151, 0.5) is Quadrant.IV
    assert quadrant(150, 0.51) is Quadrant.II


def test_quadrant_out_of_range():
    with pytest.raises(OutOfRange):
        quadrant(100, 1.2)
    with pytest.raises(OutOfRange):
        quadrant(0, 0.3)


def test_quadrant_partition_of_random_points():
    rng = np.random.default_rng(0)
    t = rng.uniform(1e-3, 400, 10_000)
    t[:100] = 150.0
    c = rng.uniform(-1, 1, 10_000)
    c[100:200] = 0.5
    predicates = {
        Quadrant.I: lambda t, c: t > 150 and c > 0.5,
        Quadrant.II: lambda t, c: t <= 150 and c > 0.5,
        Quadrant.III: lambda t, c: t <= 150 and c <= 0.5,
        Quadrant.IV: lambda t, c: t > 150 and c <= 0.5,
    }
    for ti, ci in zip(t, c):
        hits = [q for q, f in predicates.items() if f(ti, ci)]
        assert hits == [quadrant(ti, ci)]


def test_membership_examples():
    m = quadrant_membership("a|b", [0.7] * 5, 100)
    assert m.percent == {Quadrant.II: 100.0} and m.max_percent == 100.0
    m = quadrant_membership("a|b", [0.8, 0.2] * 4, 100)
    assert m.percent == {Quadrant.II: 50.0, Quadrant.III: 50.0}
    assert m.visited == {Quadrant.II, Quadrant.III}


def test_membership_matches_brute_force():
    rng = random.Random(1)
    corrs = [max(-1.0, min(1.0, 0.3 + 0.02 * d + rng.gauss(0, 0.2))) for d in range(60)]
    m = quadrant_membership("a|b", corrs, 120)
    tally = {}
    for c in corrs:
        q = "II" if c > 0.5 else "III"
        tally[q] = tally.get(q, 0) + 1
    assert {q.value: p for q, p in m.percent.items()} == {q: 100.0 * k / 60 for q, k in tally.items()}
    assert sum(m.percent.values()) == pytest.approx(100.0)


def test_membership_empty():
    with pytest.raises(EmptyInput):
        quadrant_membership("a|b", [], 100)


def pair_series(day_directions, strength=0.9, step=300, seed=0, sensors=("A", "B")):
    """Two footfall series with a per-day planted direction (1, 2 or None for uncoupled)."""
    per_day = 86400 // step
    a, b = [], []
    for d, direction in enumerate(day_directions):
        src, tgt = generate_coupled_counts(per_day, strength=strength if direction else 0.0, seed=[seed, d])
        if direction == 2:
            src, tgt = tgt, src
        a.append(src)
        b.append(tgt)
    return (FootfallSeries(sensors[0], T0, np.concatenate(a), step),
            FootfallSeries(sensors[1], T0, np.concatenate(b), step))


FAST = FlowParams(n_surrogates=50)


def test_identical_days_identical_codes():
    one_a, one_b = pair_series([1])
    a = FootfallSeries("A", T0, np.tile(one_a.values, 7))
    b = FootfallSeries("B", T0, np.tile(one_b.values, 7))
    fs = daily_flow_series(a, b, FAST)
    assert len(fs.codes) == 7
    assert len({int(c) for c in fs.codes}) == 1
    assert len({(r.te_ab, r.te_ba) for r in fs.results}) == 1


def test_low_coverage_day_skipped():
    a, b = pair_series([1, 1, 1])
    values = a.values.copy()
    values[288 : 288 + 144] = np.nan
    fs = daily_flow_series(FootfallSeries("A", T0, values), b, FAST)
    days = [r.day for r in fs.results]
    assert date(2017, 3, 2) not in days and len(days) == 2
    assert fs.skipped[0][0] == date(2017, 3, 2) and "coverage 0.5000" in fs.skipped[0][1]


def test_alternating_direction_recovered():
    directions = [1, 2] * 5
    a, b = pair_series(directions, strength=0.8, step=40, seed=3)
    fs = daily_flow_series(a, b, FlowParams())
    assert len(fs.codes) == 10
    assert all(r.ab.n_samples >= 2000 for r in fs.results)
    hits = sum(int(c) == d for c, d in zip(fs.codes, directions))
    assert hits >= 9


def test_local_days_follow_timezone():
    s = FootfallSeries("A", T0, np.zeros(288 * 2))
    days = list(local_days(s, "America/New_York"))
    assert [d for d, _, _ in days] == [date(2017, 2, 28), date(2017, 3, 1), date(2017, 3, 2)]
    assert days[1][1] == T0 + timedelta(hours=5) and days[1][2] == 288


def test_pair_day_seed_stable_and_distinct():
    d = date(2017, 3, 1)
    assert pair_day_seed(0, "A|B", d) == pair_day_seed(0, "A|B", d)
    assert len({pair_day_seed(0, "A|B", d), pair_day_seed(0, "B|A", d),
                pair_day_seed(1, "A|B", d), pair_day_seed(0, "A|B", d + timedelta(days=1))}) == 4


def test_daily_correlations():
    a, b = pair_series([None, None])
    rows, skipped = daily_correlations(a, FootfallSeries("B", T0, a.values * 2 + 1))
    assert [round(r, 12) for _, r in rows] == [1.0, 1.0] and skipped == []


def test_analyze_pairs_invariant_to_jobs():
    a, b = pair_series([1, 2, None], seed=4)
    c, d = pair_series([2, 1, None], seed=5, sensors=("C", "D"))
    series = {s.sensor_id: s for s in (a, b, c, d)}
    pairs = [PairGeometry("A", "B", 90), PairGeometry("C", "D", 200), PairGeometry("A", "D", 120),
             PairGeometry("A", "Z", 100)]
    serial = analyze_pairs(series, pairs, FAST, jobs=1)
    parallel = analyze_pairs(series, pairs, FAST, jobs=2)
    for x, y in zip(serial, parallel):
        assert x.pair_id == y.pair_id and x.codes == y.codes
        assert [(r.te_ab, r.te_ba, r.ab.p_value, r.p_max) for r in x.results] == \
            [(r.te_ab, r.te_ba, r.ab.p_value, r.p_max) for r in y.results]
    assert serial[3].results == []


def test_te_csv_round_trip_preserves_codes():
    a, b = pair_series([1, 2])
    fs = daily_flow_series(a, b, FAST)
    buf = io.StringIO()
    write_te([fs], buf)
    buf.seek(0)
    back = read_te(buf)
    assert [classify_flow(r.ab, r.ba, p_max=r.p_max) for r in back] == fs.codes


def test_pairs_csv_round_trip():
    pairs = [PairGeometry("A", "B", 90.5), PairGeometry("C", "D", 300.0)]
    buf = io.StringIO()
    write_pairs(pairs, buf)
    buf.seek(0)
    assert read_pairs(buf) == pairs
