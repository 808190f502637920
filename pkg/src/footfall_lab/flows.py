"""Pairwise daily flow analysis: direction codes, preferred direction and quadrants.

Direction codes for an ordered pair ``(a, b)``:

* ``1``  information flows mainly a -> b
* ``2``  information flows mainly b -> a
* ``0``  both directions carry about the same information
* ``-1`` the stronger direction is not statistically significant

Significance of the stronger direction is judged with a max-statistic
permutation test: surrogate ``i`` contributes ``max(te_ab_i, te_ba_i)`` and
the observed ``max(te_ab, te_ba)`` is ranked against those. Testing the
larger of two statistics against single-direction nulls would roughly double
the false-positive rate on uncoupled pairs.
"""

from __future__ import annotations

import csv
import enum
import logging
import zlib
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta, timezone
from typing import Iterable, Sequence, TextIO
from zoneinfo import ZoneInfo

import numpy as np

from .clean import FootfallSeries
from .errors import (
    ConstantInput,
    EmptyInput,
    FootfallError,
    InvalidParameter,
    MalformedRecord,
    OutOfRange,
    ParameterMismatch,
)
from .info import TIE_TOL, SurrogateResult, discretize, surrogate_test
from .series import DEFAULT_COVERAGE, align_pair, pearson
from .timefmt import to_epoch

log = logging.getLogger(__name__)

QUADRANT_CENTER = (150.0, 0.5)
PREFERRED_THRESHOLD = 10.0
TE_COLUMNS = ("pair", "date", "te_ab_bits", "te_ba_bits", "p_ab", "p_ba", "n_samples", "lag", "coverage", "p_max")
FLOW_COLUMNS = ("pair", "date", "te_ab_bits", "te_ba_bits", "p_ab", "p_ba", "vf_code")


class FlowDirection(enum.IntEnum):
    NOT_SIGNIFICANT = -1
    BALANCED = 0
    A_TO_B = 1
    B_TO_A = 2

    def swapped(self):
        if self is FlowDirection.A_TO_B:
            return FlowDirection.B_TO_A
        if self is FlowDirection.B_TO_A:
            return FlowDirection.A_TO_B
        return self


class Quadrant(str, enum.Enum):
    I = "I"
    II = "II"
    III = "III"
    IV = "IV"


@dataclass(frozen=True)
class PairGeometry:
    sensor_a: str
    sensor_b: str
    walking_seconds: float

    def __post_init__(self):
        if not self.walking_seconds > 0:
            raise InvalidParameter(f"walking_seconds must be positive for {self.pair_id}")

    @property
    def pair_id(self):
        return f"{self.sensor_a}|{self.sensor_b}"


@dataclass(frozen=True)
class FlowParams:
    bins: int = 4
    strategy: str = "equal_frequency"
    lag: int = 1
    n_surrogates: int = 100
    alpha: float = 0.05
    epsilon_bits: float = 1e-3
    coverage_threshold: float = DEFAULT_COVERAGE
    seed: int = 0
    timezone: str = "UTC"


@dataclass(frozen=True)
class TePairResult:
    """Both transfer-entropy directions for one pair on one day."""

    pair_id: str
    day: date
    ab: SurrogateResult = field(repr=False)
    ba: SurrogateResult = field(repr=False)
    coverage: float = 1.0
    p_max: float | None = None

    def __post_init__(self):
        if self.p_max is None:
            object.__setattr__(self, "p_max", joint_max_p(self.ab, self.ba))

    @property
    def te_ab(self):
        return self.ab.observed_bits

    @property
    def te_ba(self):
        return self.ba.observed_bits


@dataclass
class FlowSeries:
    pair_id: str
    results: list = field(default_factory=list)
    codes: list = field(default_factory=list)
    skipped: list = field(default_factory=list)

    def dated_codes(self):
        return [(r.day, c) for r, c in zip(self.results, self.codes)]


def joint_max_p(ab: SurrogateResult, ba: SurrogateResult) -> float:
    """p-value of ``max(te_ab, te_ba)`` against index-paired surrogate maxima.

    Falls back to the stronger direction's own p-value when surrogate values
    are unavailable (for instance when results were read back from CSV).
    """
    sa, sb = np.asarray(ab.surrogate_values), np.asarray(ba.surrogate_values)
    if sa.size == 0 or sa.shape != sb.shape:
        if ab.observed_bits == ba.observed_bits:
            return min(ab.p_value, ba.p_value)
        return (ab if ab.observed_bits > ba.observed_bits else ba).p_value
    observed = max(ab.observed_bits, ba.observed_bits)
    exceed = int(np.count_nonzero(np.maximum(sa, sb) >= observed - TIE_TOL))
    return (1 + exceed) / (1 + sa.size)


def classify_flow(
    ab: SurrogateResult, ba: SurrogateResult, epsilon_bits=1e-3, alpha=0.05, p_max: float | None = None
) -> FlowDirection:
    """Assign a direction code from the two directed surrogate tests.

    ``p_max`` is the significance of the stronger direction; it is computed
    from the paired surrogates when not supplied.
    """
    if ab.lag != ba.lag or ab.n_samples != ba.n_samples:
        raise ParameterMismatch(
            f"directions estimated with different parameters (lag {ab.lag}/{ba.lag}, "
            f"n {ab.n_samples}/{ba.n_samples})"
        )
    if p_max is None:
        p_max = joint_max_p(ab, ba)
    if p_max > alpha:
        return FlowDirection.NOT_SIGNIFICANT
    if abs(ab.observed_bits - ba.observed_bits) <= epsilon_bits:
        return FlowDirection.BALANCED
    return FlowDirection.A_TO_B if ab.observed_bits > ba.observed_bits else FlowDirection.B_TO_A


def preferred_direction(codes: Iterable[int], threshold=PREFERRED_THRESHOLD) -> FlowDirection | None:
    """Most frequent code if it leads the runner-up by more than ``threshold`` percentage points."""
    counts = Counter(int(c) for c in codes)
    total = sum(counts.values())
    if total == 0:
        raise EmptyInput("no direction codes")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    top_pct = 100.0 * ranked[0][1] / total
    second_pct = 100.0 * ranked[1][1] / total if len(ranked) > 1 else 0.0
    if top_pct - second_pct > threshold:
        return FlowDirection(ranked[0][0])
    return None


def quadrant(walking_seconds: float, correlation: float, center=QUADRANT_CENTER) -> Quadrant:
    """Cartesian quadrant around ``center``; points on a centre line go left/bottom."""
    if not walking_seconds > 0:
        raise OutOfRange(f"walking_seconds must be positive, got {walking_seconds}")
    if not -1.0 <= correlation <= 1.0:
        raise OutOfRange(f"correlation must lie in [-1, 1], got {correlation}")
    right = walking_seconds > center[0]
    top = correlation > center[1]
    if top:
        return Quadrant.I if right else Quadrant.II
    return Quadrant.IV if right else Quadrant.III


@dataclass
class QuadrantMembership:
    pair_id: str
    percent: dict
    n_days: int

    @property
    def visited(self):
        return set(self.percent)

    @property
    def max_percent(self):
        return max(self.percent.values())

    @property
    def dominant(self):
        order = list(Quadrant)
        return max(self.percent, key=lambda q: (self.percent[q], -order.index(q)))


def quadrant_membership(pair_id, daily_correlations: Sequence[float], walking_seconds, center=QUADRANT_CENTER):
    """Share of days (percent) a pair spends in each quadrant."""
    if len(daily_correlations) == 0:
        raise EmptyInput(f"no valid days for {pair_id}")
    counts = Counter(quadrant(walking_seconds, c, center) for c in daily_correlations)
    n = len(daily_correlations)
    percent = {q: 100.0 * counts[q] / n for q in Quadrant if counts[q]}
    return QuadrantMembership(pair_id, percent, n)


def local_days(series: FootfallSeries, tz: str):
    """Yield ``(date, start_utc, n_slots)`` for each local civil day the series touches."""
    zone = ZoneInfo(tz)
    first = series.start.astimezone(zone).date()
    last = series.time_at(len(series) - 1).astimezone(zone).date()
    day = first
    while day <= last:
        lo = datetime.combine(day, time(0), zone).astimezone(timezone.utc)
        hi = datetime.combine(day + timedelta(days=1), time(0), zone).astimezone(timezone.utc)
        # snap local midnight onto the series grid
        shift = (to_epoch(lo) - series.start_epoch) % series.step
        lo -= timedelta(seconds=shift)
        yield day, lo, int((hi - lo).total_seconds()) // series.step
        day += timedelta(days=1)


def pair_day_seed(seed, pair_id, day: date) -> int:
    """Surrogate seed for one pair-day, independent of processing order."""
    ss = np.random.SeedSequence([seed, zlib.crc32(pair_id.encode()), day.toordinal()])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def _day_pairs(a: FootfallSeries, b: FootfallSeries, tz: str):
    days = {}
    for s in (a, b):
        for day, lo, n in local_days(s, tz):
            days.setdefault(day, (lo, n))
    for day in sorted(days):
        lo, n = days[day]
        yield day, a.reindex(lo, n), b.reindex(lo, n)


def daily_flow_series(a: FootfallSeries, b: FootfallSeries, params: FlowParams = FlowParams()) -> FlowSeries:
    """Direction code per local day for the ordered pair ``(a, b)``.

    Days whose joint coverage is below ``params.coverage_threshold`` are
    skipped and listed in ``skipped`` with a reason.
    """
    pair_id = f"{a.sensor_id}|{b.sensor_id}"
    out = FlowSeries(pair_id)
    for day, da, db in _day_pairs(a, b, params.timezone):
        aligned = align_pair(da, db)
        if aligned.coverage < params.coverage_threshold:
            out.skipped.append((day, f"coverage {aligned.coverage:.4f} below {params.coverage_threshold}"))
            continue
        if aligned.a.size <= max(params.lag, params.bins):
            out.skipped.append((day, "too few aligned slots"))
            continue
        result = pair_day_te(pair_id, day, aligned.a, aligned.b, params, aligned.coverage)
        out.results.append(result)
        out.codes.append(classify_flow(result.ab, result.ba, params.epsilon_bits, params.alpha, result.p_max))
    return out


def pair_day_te(pair_id, day, a_values, b_values, params: FlowParams, coverage=1.0) -> TePairResult:
    sa = discretize(a_values, params.bins, params.strategy)
    sb = discretize(b_values, params.bins, params.strategy)
    seed = pair_day_seed(params.seed, pair_id, day)
    ab = surrogate_test(sa, sb, params.lag, params.n_surrogates, seed)
    ba = surrogate_test(sb, sa, params.lag, params.n_surrogates, seed)
    return TePairResult(pair_id, day, ab, ba, coverage)


def daily_correlations(a: FootfallSeries, b: FootfallSeries, tz="UTC", coverage_threshold=DEFAULT_COVERAGE):
    """Pearson correlation per local day; returns ``(rows, skipped)``."""
    rows, skipped = [], []
    for day, da, db in _day_pairs(a, b, tz):
        aligned = align_pair(da, db)
        if aligned.coverage < coverage_threshold:
            skipped.append((day, f"coverage {aligned.coverage:.4f} below {coverage_threshold}"))
            continue
        try:
            rows.append((day, pearson(aligned.a, aligned.b)))
        except (ConstantInput, FootfallError) as exc:
            skipped.append((day, str(exc)))
    return rows, skipped


def _pair_task(args):
    a, b, params = args
    return daily_flow_series(a, b, params)


def analyze_pairs(series: dict, pairs: Sequence[PairGeometry], params: FlowParams = FlowParams(), jobs=1):
    """Daily flow series for every pair; output order follows ``pairs`` for any ``jobs``."""
    tasks = []
    for g in pairs:
        if g.sensor_a not in series or g.sensor_b not in series:
            log.warning("pair %s: sensor not present in footfall data", g.pair_id)
            tasks.append(None)
            continue
        tasks.append((series[g.sensor_a], series[g.sensor_b], params))
    runnable = [t for t in tasks if t is not None]
    if jobs > 1 and len(runnable) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            done = iter(list(pool.map(_pair_task, runnable, chunksize=max(1, len(runnable) // (4 * jobs)))))
    else:
        done = iter([_pair_task(t) for t in runnable])
    return [next(done) if t is not None else FlowSeries(g.pair_id) for g, t in zip(pairs, tasks)]


def read_pairs(stream: TextIO) -> list[PairGeometry]:
    reader = csv.DictReader(stream)
    if reader.fieldnames is None or set(reader.fieldnames) != {"sensor_a", "sensor_b", "walking_seconds"}:
        raise MalformedRecord(1, "expected header sensor_a,sensor_b,walking_seconds")
    pairs = []
    for lineno, row in enumerate(reader, start=2):
        try:
            pairs.append(PairGeometry(row["sensor_a"].strip(), row["sensor_b"].strip(), float(row["walking_seconds"])))
        except (ValueError, InvalidParameter) as exc:
            raise MalformedRecord(lineno, str(exc)) from None
    return pairs


def write_pairs(pairs: Iterable[PairGeometry], stream: TextIO):
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(("sensor_a", "sensor_b", "walking_seconds"))
    for g in pairs:
        writer.writerow((g.sensor_a, g.sensor_b, repr(float(g.walking_seconds))))


def write_te(flow_series: Iterable[FlowSeries], stream: TextIO):
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(TE_COLUMNS)
    for fs in flow_series:
        for r in fs.results:
            writer.writerow(
                (r.pair_id, r.day.isoformat(), repr(r.te_ab), repr(r.te_ba), repr(r.ab.p_value),
                 repr(r.ba.p_value), r.ab.n_samples, r.ab.lag, repr(float(r.coverage)), repr(float(r.p_max)))
            )


def read_te(stream: TextIO) -> list[TePairResult]:
    """Read a TE CSV back into results (surrogate values are not stored)."""
    reader = csv.DictReader(stream)
    if reader.fieldnames is None or tuple(reader.fieldnames) != TE_COLUMNS:
        raise MalformedRecord(1, f"expected header {','.join(TE_COLUMNS)}")
    out = []
    for lineno, row in enumerate(reader, start=2):
        try:
            n, lag = int(row["n_samples"]), int(row["lag"])
            empty = np.empty(0)
            ab = SurrogateResult(float(row["te_ab_bits"]), empty, float(row["p_ab"]), -1, lag, n)
            ba = SurrogateResult(float(row["te_ba_bits"]), empty, float(row["p_ba"]), -1, lag, n)
            out.append(
                TePairResult(row["pair"], date.fromisoformat(row["date"]), ab, ba, float(row["coverage"]),
                             float(row["p_max"]))
            )
        except (KeyError, ValueError) as exc:
            raise MalformedRecord(lineno, str(exc)) from None
    return out


def write_flows(rows: Iterable[tuple[TePairResult, FlowDirection]], stream: TextIO):
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(FLOW_COLUMNS)
    for r, code in rows:
        writer.writerow(
            (r.pair_id, r.day.isoformat(), repr(r.te_ab), repr(r.te_ba), repr(r.ab.p_value),
             repr(r.ba.p_value), int(code))
        )
