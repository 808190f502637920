"""Long-dweller filtering, randomised-count adjustment and footfall estimates.

The adjustment rule is an interpretation: the share of non-randomised
devices that survive dweller filtering is applied to the randomised
population, ``adjusted = unique_random * filtered_nonrandom / unique_nonrandom``.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Iterable, Sequence, TextIO

import numpy as np

from .errors import GridMismatch, MalformedRecord, MismatchedInterval, WindowNotMultipleOfStep
from .ingest import STEP_SECONDS, IntervalSummary
from .timefmt import format_ts, from_epoch, parse_ts, to_epoch

DWELL_WINDOW_SECONDS = 1800
FOOTFALL_COLUMNS = ("sensor_id", "interval_start", "count")


@dataclass(frozen=True)
class FilteredCounts:
    sensor_id: str
    interval_start: datetime
    filtered_random: int
    filtered_nonrandom: int
    kept_random: frozenset = field(default=frozenset(), repr=False, compare=False)
    kept_nonrandom: frozenset = field(default=frozenset(), repr=False, compare=False)


@dataclass(eq=False)
class FootfallSeries:
    """Fixed-step count series; ``NaN`` marks a MISSING slot.

    Slot ``i`` covers ``[start + i*step, start + (i+1)*step)``.
    """

    sensor_id: str
    start: datetime
    values: np.ndarray
    step: int = STEP_SECONDS

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        present = self.values[~np.isnan(self.values)]
        if present.size and present.min() < 0:
            raise ValueError("footfall counts must be non-negative")

    def __len__(self):
        return self.values.size

    @property
    def missing(self):
        return np.isnan(self.values)

    @property
    def start_epoch(self):
        return to_epoch(self.start)

    def time_at(self, i):
        return self.start + timedelta(seconds=i * self.step)

    def reindex(self, start: datetime, n: int) -> FootfallSeries:
        """Return the series on the grid ``start, start+step, ...`` of ``n`` slots.

        Slots outside the original range are MISSING. ``start`` must lie on
        this series' grid.
        """
        offset, rem = divmod(to_epoch(start) - self.start_epoch, self.step)
        if rem:
            raise GridMismatch("reindex start is not on the series grid")
        out = np.full(n, np.nan)
        lo, hi = max(offset, 0), min(offset + n, len(self))
        if lo < hi:
            out[lo - offset : hi - offset] = self.values[lo:hi]
        return FootfallSeries(self.sensor_id, start, out, self.step)

    def equals(self, other: FootfallSeries) -> bool:
        return (
            self.sensor_id == other.sensor_id
            and self.start == other.start
            and self.step == other.step
            and np.array_equal(self.values, other.values, equal_nan=True)
        )


def filter_hash_runs(slot_sets: Sequence[tuple[int, frozenset]], block: int) -> list[frozenset]:
    """Keep each hash once per run of back-to-back slots, re-counting every ``block`` slots.

    ``slot_sets`` must be ordered by slot. A hash seen in slot ``i`` and in
    slot ``i-1`` continues a run; it is kept only where its offset from the
    run start is a multiple of ``block``.
    """
    kept = []
    prev_slot = None
    prev_runs: dict = {}
    for slot, hashes in slot_sets:
        carry = prev_runs if prev_slot is not None and slot == prev_slot + 1 else {}
        runs = {}
        keep = []
        for h in hashes:
            start = carry.get(h, slot)
            runs[h] = start
            if (slot - start) % block == 0:
                keep.append(h)
        kept.append(frozenset(keep))
        prev_slot, prev_runs = slot, runs
    return kept


def remove_long_dwellers(
    summaries: Iterable[IntervalSummary], window=DWELL_WINDOW_SECONDS, step=STEP_SECONDS
) -> list[FilteredCounts]:
    """Suppress repeated counting of devices seen in consecutive intervals.

    Randomised and non-randomised hashes are filtered independently, per
    sensor. Output order follows input order.
    """
    if window <= 0 or window % step:
        raise WindowNotMultipleOfStep(f"window {window}s is not a multiple of step {step}s")
    block = window // step
    summaries = list(summaries)
    by_sensor = defaultdict(list)
    for idx, s in enumerate(summaries):
        by_sensor[s.sensor_id].append(idx)

    out: list = [None] * len(summaries)
    for indices in by_sensor.values():
        indices.sort(key=lambda i: summaries[i].interval_start)
        slots = [to_epoch(summaries[i].interval_start) // step for i in indices]
        kept_r = filter_hash_runs([(sl, summaries[i].hashes_random) for sl, i in zip(slots, indices)], block)
        kept_n = filter_hash_runs([(sl, summaries[i].hashes_nonrandom) for sl, i in zip(slots, indices)], block)
        for i, kr, kn in zip(indices, kept_r, kept_n):
            s = summaries[i]
            out[i] = FilteredCounts(s.sensor_id, s.interval_start, len(kr), len(kn), kr, kn)
    return out


def adjust_randomized(filtered: FilteredCounts, summary: IntervalSummary) -> float:
    if filtered.sensor_id != summary.sensor_id or filtered.interval_start != summary.interval_start:
        raise MismatchedInterval(
            f"{filtered.sensor_id}@{format_ts(filtered.interval_start)} vs "
            f"{summary.sensor_id}@{format_ts(summary.interval_start)}"
        )
    if summary.unique_nonrandom == 0:
        return float(summary.unique_random)
    return summary.unique_random * filtered.filtered_nonrandom / summary.unique_nonrandom


def estimate_footfall(
    filtered: Sequence[FilteredCounts], adjusted: Sequence[float], step=STEP_SECONDS
) -> FootfallSeries:
    """Combine filtered non-randomised and adjusted randomised counts into a series.

    The grid spans the first to last filtered interval; intervals absent from
    ``filtered`` (e.g. sensor outages) are MISSING.
    """
    if len(filtered) != len(adjusted):
        raise GridMismatch(f"{len(filtered)} filtered intervals vs {len(adjusted)} adjusted values")
    if not filtered:
        raise GridMismatch("no intervals to estimate")
    sensors = {f.sensor_id for f in filtered}
    if len(sensors) != 1:
        raise GridMismatch(f"expected one sensor, got {sorted(sensors)}")
    epochs = np.array([to_epoch(f.interval_start) for f in filtered])
    if np.any(epochs % step):
        raise GridMismatch(f"interval starts are not aligned to {step}s")
    base = int(epochs.min())
    idx = (epochs - base) // step
    if np.unique(idx).size != idx.size:
        raise GridMismatch("duplicate intervals")
    values = np.full(int(idx.max()) + 1, np.nan)
    values[idx] = [f.filtered_nonrandom + a for f, a in zip(filtered, adjusted)]
    return FootfallSeries(sensors.pop(), min(f.interval_start for f in filtered), values, step)


def clean_sensor(summaries: Sequence[IntervalSummary], window=DWELL_WINDOW_SECONDS, step=STEP_SECONDS):
    """Run dweller removal, adjustment and estimation for one sensor's summaries."""
    filtered = remove_long_dwellers(summaries, window, step)
    adjusted = [adjust_randomized(f, s) for f, s in zip(filtered, summaries)]
    return estimate_footfall(filtered, adjusted, step)


def clean_all(summaries: dict[str, list[IntervalSummary]], window=DWELL_WINDOW_SECONDS, step=STEP_SECONDS):
    return {sensor: clean_sensor(rows, window, step) for sensor, rows in sorted(summaries.items()) if rows}


def write_footfall(series: Iterable[FootfallSeries], stream: TextIO):
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(FOOTFALL_COLUMNS)
    for s in series:
        for i, v in enumerate(s.values):
            writer.writerow((s.sensor_id, format_ts(s.time_at(i)), "" if np.isnan(v) else repr(float(v))))


def read_footfall(stream: TextIO, step=STEP_SECONDS) -> dict[str, FootfallSeries]:
    """Read a footfall CSV; slots not listed, or with an empty count, are MISSING."""
    rows = defaultdict(dict)
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None:
        return {}
    if tuple(h.strip() for h in header) != FOOTFALL_COLUMNS:
        raise MalformedRecord(1, f"expected header {','.join(FOOTFALL_COLUMNS)}")
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            sensor, ts, count = row
            epoch = to_epoch(parse_ts(ts))
            value = float(count) if count.strip() else np.nan
        except ValueError as exc:
            raise MalformedRecord(lineno, str(exc)) from None
        if epoch % step:
            raise MalformedRecord(lineno, f"interval_start not aligned to {step}s")
        if value < 0:
            raise MalformedRecord(lineno, "negative count")
        rows[sensor][epoch] = value
    out = {}
    for sensor in sorted(rows):
        slots = rows[sensor]
        base = min(slots)
        values = np.full((max(slots) - base) // step + 1, np.nan)
        for epoch, v in slots.items():
            values[(epoch - base) // step] = v
        out[sensor] = FootfallSeries(sensor, from_epoch(base), values, step)
    return out
