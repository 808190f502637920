"""Probe-log parsing and five-minute interval aggregation.

Raw probe requests arrive as JSONL or CSV, one hashed request per line.
:func:`aggregate_intervals` groups them into fixed UTC-aligned intervals per
sensor, counting all probes and distinct hashes separately for randomised and
non-randomised MAC addresses.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import string
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, TextIO

from .errors import InvalidParameter, MalformedRecord, UnknownField
from .timefmt import format_ts, from_epoch, parse_ts, to_epoch

log = logging.getLogger(__name__)

STEP_SECONDS = 300
DAY_SECONDS = 86400

JSON_FIELDS = ("sensor_id", "ts", "mac_hash", "randomized")
INTERVAL_COLUMNS = (
    "sensor_id",
    "interval_start",
    "probes_random",
    "probes_nonrandom",
    "unique_random",
    "unique_nonrandom",
)

_HEX = frozenset(string.hexdigits)
_TRUE = {"true", "1", "yes"}
_FALSE = {"false", "0", "no"}


@dataclass(frozen=True, slots=True)
class ProbeEvent:
    sensor_id: str
    timestamp: datetime
    mac_hash: str
    is_randomized: bool


@dataclass(frozen=True)
class IntervalSummary:
    """Counts for one sensor over one interval.

    The distinct-hash sets are kept so that long-dweller filtering can run
    downstream; they are excluded from equality and from CSV output.
    """

    sensor_id: str
    interval_start: datetime
    probes_random: int = 0
    probes_nonrandom: int = 0
    unique_random: int = 0
    unique_nonrandom: int = 0
    hashes_random: frozenset = field(default=frozenset(), repr=False, compare=False)
    hashes_nonrandom: frozenset = field(default=frozenset(), repr=False, compare=False)


@dataclass(frozen=True)
class Outage:
    """A window ``[start, end)`` during which a sensor was known to be offline."""

    sensor_id: str
    start: datetime
    end: datetime


def _parse_bool(value, lineno):
    if isinstance(value, bool):
        return value
    if isinstance(value, str) and value.strip().lower() in _TRUE:
        return True
    if isinstance(value, str) and value.strip().lower() in _FALSE:
        return False
    raise MalformedRecord(lineno, f"randomized must be a boolean, got {value!r}")


def _build_event(record, lineno, window):
    for key in JSON_FIELDS:
        value = record.get(key)
        if value is None or (isinstance(value, str) and not value.strip()):
            raise MalformedRecord(lineno, f"missing {key}")
    extra = set(record) - set(JSON_FIELDS)
    if extra:
        raise UnknownField(lineno, f"unknown field(s): {', '.join(sorted(extra))}")

    mac_hash = str(record["mac_hash"]).strip().lower()
    if not set(mac_hash) <= _HEX:
        raise MalformedRecord(lineno, "mac_hash must be a hex token")
    try:
        ts = parse_ts(str(record["ts"]))
    except ValueError as exc:
        raise MalformedRecord(lineno, f"bad ts: {exc}") from None
    if window is not None and not (window[0] <= ts < window[1]):
        raise MalformedRecord(lineno, f"ts {format_ts(ts)} outside study window")
    return ProbeEvent(
        sensor_id=str(record["sensor_id"]).strip(),
        timestamp=ts,
        mac_hash=mac_hash,
        is_randomized=_parse_bool(record["randomized"], lineno),
    )


def iter_probe_log(stream: TextIO, *, lenient=False, window=None, problems=None):
    """Yield :class:`ProbeEvent` objects from a JSONL or CSV probe log.

    The format is sniffed from the first non-blank line: ``{`` means JSONL,
    anything else is taken as a CSV header. In strict mode the first bad line
    raises :class:`MalformedRecord`; with ``lenient=True`` bad lines are
    skipped, logged, and appended to ``problems`` when a list is given.
    """
    lines = iter(enumerate(stream, start=1))
    header = None
    for lineno, line in lines:
        if line.strip():
            header = (lineno, line)
            break
    if header is None:
        return

    def report(exc):
        if not lenient:
            raise exc
        log.warning("skipping %s", exc)
        if problems is not None:
            problems.append(exc)

    first_no, first_line = header
    if first_line.lstrip().startswith("{"):
        for lineno, line in _chain([(first_no, first_line)], lines):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                if not isinstance(record, dict):
                    raise MalformedRecord(lineno, "record is not a JSON object")
                yield _build_event(record, lineno, window)
            except json.JSONDecodeError as exc:
                report(MalformedRecord(lineno, f"invalid JSON: {exc.msg}"))
            except MalformedRecord as exc:
                report(exc)
        return

    columns = [c.strip() for c in next(csv.reader([first_line]))]
    unknown = set(columns) - set(JSON_FIELDS)
    if unknown:
        raise UnknownField(first_no, f"unknown column(s): {', '.join(sorted(unknown))}")
    for lineno, line in lines:
        if not line.strip():
            continue
        row = next(csv.reader([line]))
        try:
            if len(row) != len(columns):
                raise MalformedRecord(lineno, f"expected {len(columns)} fields, got {len(row)}")
            yield _build_event(dict(zip(columns, row)), lineno, window)
        except MalformedRecord as exc:
            report(exc)


def _chain(head, tail):
    yield from head
    yield from tail


def parse_probe_log(stream: TextIO | str, *, lenient=False, window=None, problems=None):
    """Parse a whole probe log into a list of events, in file order."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    return list(iter_probe_log(stream, lenient=lenient, window=window, problems=problems))


def aggregate_intervals(
    events: Iterable[ProbeEvent], step=STEP_SECONDS, outages=()
) -> dict[str, list[IntervalSummary]]:
    """Aggregate events into per-sensor interval summaries.

    Intervals are ``floor(epoch / step)`` on the UTC grid, so an event exactly
    on a boundary belongs to the later interval. Every interval between a
    sensor's first and last event is emitted, zero-filled when empty, except
    intervals that overlap one of ``outages``; those are left out so that they
    become MISSING downstream.
    """
    if step <= 0 or DAY_SECONDS % step:
        raise InvalidParameter(f"step {step}s must divide one day evenly")

    # sensor -> slot -> [probes_r, probes_n, hashes_r, hashes_n]
    table = defaultdict(dict)
    for ev in events:
        slot = to_epoch(ev.timestamp) // step
        cell = table[ev.sensor_id].get(slot)
        if cell is None:
            cell = table[ev.sensor_id][slot] = [0, 0, set(), set()]
        if ev.is_randomized:
            cell[0] += 1
            cell[2].add(ev.mac_hash)
        else:
            cell[1] += 1
            cell[3].add(ev.mac_hash)

    offline = defaultdict(list)
    for out in outages:
        offline[out.sensor_id].append(
            (to_epoch(out.start) // step, -(-to_epoch(out.end) // step))
        )

    result = {}
    for sensor in sorted(table):
        slots = table[sensor]
        down = offline.get(sensor, [])
        summaries = []
        for slot in range(min(slots), max(slots) + 1):
            if any(lo <= slot < hi for lo, hi in down):
                continue
            pr, pn, hr, hn = slots.get(slot, (0, 0, (), ()))
            summaries.append(
                IntervalSummary(
                    sensor_id=sensor,
                    interval_start=from_epoch(slot * step),
                    probes_random=pr,
                    probes_nonrandom=pn,
                    unique_random=len(hr),
                    unique_nonrandom=len(hn),
                    hashes_random=frozenset(hr),
                    hashes_nonrandom=frozenset(hn),
                )
            )
        result[sensor] = summaries
    return result


def read_outages(stream: TextIO):
    """Read an outage sidecar CSV with header ``sensor_id,start,end``."""
    reader = csv.DictReader(stream)
    outages = []
    for lineno, row in enumerate(reader, start=2):
        try:
            outages.append(Outage(row["sensor_id"], parse_ts(row["start"]), parse_ts(row["end"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedRecord(lineno, f"bad outage row: {exc}") from None
    return outages


def write_outages(outages, stream: TextIO):
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(("sensor_id", "start", "end"))
    for out in outages:
        writer.writerow((out.sensor_id, format_ts(out.start), format_ts(out.end)))


def write_intervals(summaries: dict[str, list[IntervalSummary]], stream: TextIO):
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(INTERVAL_COLUMNS)
    for sensor in sorted(summaries):
        for s in summaries[sensor]:
            writer.writerow(
                (
                    s.sensor_id,
                    format_ts(s.interval_start),
                    s.probes_random,
                    s.probes_nonrandom,
                    s.unique_random,
                    s.unique_nonrandom,
                )
            )


def write_probe_log(events: Iterable[ProbeEvent], stream: TextIO):
    """Write events as JSONL in the format :func:`parse_probe_log` reads."""
    for ev in events:
        stream.write(
            json.dumps(
                {
                    "sensor_id": ev.sensor_id,
                    "ts": format_ts(ev.timestamp),
                    "mac_hash": ev.mac_hash,
                    "randomized": ev.is_randomized,
                },
                separators=(",", ":"),
            )
        )
        stream.write("\n")
