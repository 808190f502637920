"""Seeded synthetic probe streams and coupled symbol series with known ground truth.

The probe generator models the acquisition biases of Wi-Fi counting:

* sensor range: per-interval detection probability (``range_jitter``)
* probing frequency: per-device probe rate with log-normal spread (``probing_rate_jitter``)
* MAC collisions: a small share of devices reuse another device's hash (``collision_rate``)
* on-site conditions: sensor outages that suppress all events (``outage_windows``)
* post-processing: randomised MACs, which rotate hash every interval (``randomized_fraction``),
  and long dwellers that persist across consecutive intervals (``dweller_fraction``)

Ground-truth footfall is counted on true device identity with the same
once-per-window rule the cleaning pipeline applies to hashes.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta, timezone
from typing import TextIO

import numpy as np

from .clean import DWELL_WINDOW_SECONDS
from .errors import InvalidParameter, InvalidScenario
from .ingest import STEP_SECONDS, Outage, ProbeEvent
from .timefmt import format_ts, from_epoch, parse_ts, to_epoch

MAX_COLLISION_RATE = 1e-3
DEFAULT_START = datetime(2017, 1, 1, tzinfo=timezone.utc)
_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)


@dataclass(frozen=True)
class Coupling:
    source: str
    target: str
    lag_slots: int = 1
    strength: float = 0.5


@dataclass(frozen=True)
class OutageWindow:
    sensor: str
    start_slot: int
    length: int


@dataclass(frozen=True)
class SynthScenario:
    n_sensors: int = 2
    n_intervals: int = 288
    start: datetime = DEFAULT_START
    base_rate: float = 50.0
    diurnal_amplitude: float = 0.0
    dweller_fraction: float = 0.1
    max_dwell_slots: int = 12
    randomized_fraction: float = 0.3
    mean_probes: float = 3.0
    probing_rate_jitter: float = 0.5
    range_jitter: float = 0.0
    collision_rate: float = 1e-4
    outage_windows: tuple = ()
    coupling: tuple = ()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "outage_windows", tuple(
            w if isinstance(w, OutageWindow) else OutageWindow(*w) for w in self.outage_windows))
        object.__setattr__(self, "coupling", tuple(
            c if isinstance(c, Coupling) else Coupling(*c) for c in self.coupling))
        self.validate()

    @property
    def sensor_ids(self):
        width = max(2, len(str(self.n_sensors - 1)))
        return [f"S{i:0{width}d}" for i in range(self.n_sensors)]

    def validate(self):
        def check(cond, msg):
            if not cond:
                raise InvalidScenario(msg)

        check(self.n_sensors >= 1, "n_sensors must be at least 1")
        check(self.n_intervals >= 1, "n_intervals must be at least 1")
        check(self.base_rate >= 0, "base_rate must be non-negative")
        check(0 <= self.diurnal_amplitude <= 1, "diurnal_amplitude must lie in [0, 1]")
        check(0 <= self.dweller_fraction <= 1, "dweller_fraction must lie in [0, 1]")
        check(0 <= self.randomized_fraction <= 1, "randomized_fraction must lie in [0, 1]")
        check(self.max_dwell_slots >= 2, "max_dwell_slots must be at least 2")
        check(self.mean_probes >= 1, "mean_probes must be at least 1")
        check(self.probing_rate_jitter >= 0, "probing_rate_jitter must be non-negative")
        check(0 <= self.range_jitter <= 1, "range_jitter must lie in [0, 1]")
        check(0 <= self.collision_rate <= MAX_COLLISION_RATE, f"collision_rate must lie in [0, {MAX_COLLISION_RATE}]")
        check(self.seed >= 0, "seed must be non-negative")
        check(self.start.tzinfo is not None and to_epoch(self.start) % STEP_SECONDS == 0,
              "start must be an aware instant on the 300 s grid")
        ids = set(self.sensor_ids)
        inflow = {}
        for c in self.coupling:
            check(c.source in ids and c.target in ids, f"coupling references unknown sensor: {c}")
            check(c.source != c.target, f"coupling from a sensor to itself: {c}")
            check(c.lag_slots >= 1, f"coupling lag must be at least 1 slot: {c}")
            check(0 <= c.strength <= 1, f"coupling strength must lie in [0, 1]: {c}")
            inflow[c.target] = inflow.get(c.target, 0.0) + c.strength
        check(all(v <= 1 for v in inflow.values()), "total coupling strength into a sensor exceeds 1")
        for w in self.outage_windows:
            check(w.sensor in ids, f"outage references unknown sensor: {w}")
            check(w.length >= 1 and 0 <= w.start_slot < self.n_intervals, f"outage out of range: {w}")

    @classmethod
    def from_dict(cls, data: dict) -> SynthScenario:
        data = dict(data)
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise InvalidScenario(f"unknown scenario key(s): {', '.join(sorted(unknown))}")
        if "start" in data:
            data["start"] = parse_ts(data["start"])
        try:
            data["coupling"] = tuple(Coupling(**c) if isinstance(c, dict) else Coupling(*c) for c in data.get("coupling", ()))
            data["outage_windows"] = tuple(
                OutageWindow(**w) if isinstance(w, dict) else OutageWindow(*w) for w in data.get("outage_windows", ()))
            return cls(**data)
        except TypeError as exc:
            raise InvalidScenario(str(exc)) from None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["start"] = format_ts(self.start)
        d["coupling"] = [asdict(c) for c in self.coupling]
        d["outage_windows"] = [asdict(w) for w in self.outage_windows]
        return d


@dataclass(eq=False)
class GroundTruth:
    start: datetime
    step: int
    true_counts: dict
    event_counts: dict
    planted_direction: dict = field(default_factory=dict)
    outages: list = field(default_factory=list)


def _mix64(x):
    """splitmix64 finaliser on uint64 arrays."""
    with np.errstate(over="ignore"):
        z = (x + np.uint64(0x9E3779B97F4A7C15)) & _MASK64
        z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & _MASK64
        z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & _MASK64
        return z ^ (z >> np.uint64(31))


def _diurnal(scenario, n):
    if scenario.diurnal_amplitude == 0:
        return np.ones(n)
    sec = (to_epoch(scenario.start) + np.arange(n) * STEP_SECONDS) % 86400
    # trough around 04:00, peak around 16:00 UTC
    return 1.0 + scenario.diurnal_amplitude * np.sin(2 * np.pi * (sec / 86400.0 - 10 / 24))


def _simulate(scenario: SynthScenario):
    """Device-level simulation; returns presence rows and per-device attributes."""
    rng = np.random.default_rng(scenario.seed)
    n, k = scenario.n_intervals, scenario.n_sensors
    index = {sid: i for i, sid in enumerate(scenario.sensor_ids)}
    inflow = np.zeros(k)
    for c in scenario.coupling:
        inflow[index[c.target]] += c.strength

    rate = scenario.base_rate * _diurnal(scenario, n)
    own = rng.poisson(np.outer(1.0 - inflow, rate))
    arr_sensor = np.repeat(np.repeat(np.arange(k), n), own.ravel())
    arr_slot = np.repeat(np.tile(np.arange(n), k), own.ravel())
    arr_device = np.arange(arr_sensor.size)
    n_devices = arr_sensor.size

    for c in scenario.coupling:
        src, tgt = index[c.source], index[c.target]
        mask = (arr_sensor == src) & (arr_slot + c.lag_slots < n)
        follow = mask & (rng.random(arr_sensor.size) < c.strength)
        arr_sensor = np.concatenate([arr_sensor, np.full(follow.sum(), tgt)])
        arr_slot = np.concatenate([arr_slot, arr_slot[follow] + c.lag_slots])
        arr_device = np.concatenate([arr_device, arr_device[follow]])

    is_dweller = rng.random(n_devices) < scenario.dweller_fraction
    is_random = rng.random(n_devices) < scenario.randomized_fraction
    probe_extra = (scenario.mean_probes - 1.0) * np.exp(
        scenario.probing_rate_jitter * rng.standard_normal(n_devices) - 0.5 * scenario.probing_rate_jitter**2)
    device_hash = _mix64(np.arange(n_devices, dtype=np.uint64) ^ _mix64(np.uint64(scenario.seed % 2**64)))
    collide = np.flatnonzero(rng.random(n_devices) < scenario.collision_rate)
    if collide.size and n_devices > 1:
        donors = rng.integers(0, n_devices - 1, collide.size)
        donors += donors >= collide
        device_hash[collide] = device_hash[donors]

    dwell = np.where(is_dweller[arr_device], rng.integers(2, scenario.max_dwell_slots + 1, arr_device.size), 1)
    p_sensor = np.repeat(arr_sensor, dwell)
    p_device = np.repeat(arr_device, dwell)
    offsets = np.arange(dwell.sum()) - np.repeat(np.cumsum(dwell) - dwell, dwell)
    p_slot = np.repeat(arr_slot, dwell) + offsets
    keep = p_slot < n
    p_sensor, p_device, p_slot = p_sensor[keep], p_device[keep], p_slot[keep]

    # overlapping visits of one device to one sensor collapse to a single presence
    key = (p_sensor.astype(np.int64) * n_devices + p_device) * n + p_slot
    key = np.unique(key)
    p_slot = key % n
    p_device = (key // n) % n_devices
    p_sensor = key // n // n_devices
    return rng, p_sensor, p_device, p_slot, is_random, probe_extra, device_hash, index


def _identity_counts(p_sensor, p_device, p_slot, k, n, block):
    """Once-per-window footfall tally on true identities; rows sorted by (sensor, device, slot)."""
    counts = np.zeros((k, n), dtype=np.int64)
    if p_slot.size == 0:
        return counts
    new_run = np.ones(p_slot.size, dtype=bool)
    same = (p_sensor[1:] == p_sensor[:-1]) & (p_device[1:] == p_device[:-1]) & (p_slot[1:] == p_slot[:-1] + 1)
    new_run[1:] = ~same
    run_id = np.cumsum(new_run) - 1
    run_start = p_slot[new_run][run_id]
    counted = (p_slot - run_start) % block == 0
    np.add.at(counts, (p_sensor[counted], p_slot[counted]), 1)
    return counts


def generate_probe_stream(scenario: SynthScenario, window=DWELL_WINDOW_SECONDS):
    """Generate hashed probe events and ground truth for a scenario.

    Events are ordered by time, then sensor, deterministically for a seed.
    """
    n, k = scenario.n_intervals, scenario.n_sensors
    rng, p_sensor, p_device, p_slot, is_random, probe_extra, device_hash, index = _simulate(scenario)
    true_counts = _identity_counts(p_sensor, p_device, p_slot, k, n, window // STEP_SECONDS)

    detect_p = np.clip(1.0 - np.abs(scenario.range_jitter * rng.standard_normal((k, n))), 0.0, 1.0)
    detected = rng.random(p_slot.size) < detect_p[p_sensor, p_slot]
    offline = np.zeros((k, n), dtype=bool)
    for w in scenario.outage_windows:
        offline[index[w.sensor], w.start_slot : w.start_slot + w.length] = True
    detected &= ~offline[p_sensor, p_slot]
    d_sensor, d_device, d_slot = p_sensor[detected], p_device[detected], p_slot[detected]

    n_probes = 1 + rng.poisson(probe_extra[d_device])
    e_sensor = np.repeat(d_sensor, n_probes)
    e_device = np.repeat(d_device, n_probes)
    e_slot = np.repeat(d_slot, n_probes)
    base = to_epoch(scenario.start)
    e_time = base + e_slot * STEP_SECONDS + rng.integers(0, STEP_SECONDS, e_slot.size)
    e_random = is_random[e_device]
    fresh = _mix64(device_hash[e_device] ^ _mix64(e_slot.astype(np.uint64) + np.uint64(0xA5A5)))
    e_hash = np.where(e_random, fresh, device_hash[e_device])

    order = np.lexsort((e_hash, e_sensor, e_time))
    sensor_ids = scenario.sensor_ids
    epoch = datetime(1970, 1, 1, tzinfo=timezone.utc)
    events = [
        ProbeEvent(sensor_ids[s], epoch + timedelta(seconds=int(t)), f"{h:016x}", bool(r))
        for s, t, h, r in zip(e_sensor[order].tolist(), e_time[order].tolist(),
                              e_hash[order].tolist(), e_random[order].tolist())
    ]

    event_counts = np.zeros((k, n), dtype=np.int64)
    np.add.at(event_counts, (e_sensor, e_slot), 1)
    n_days = -(-n * STEP_SECONDS // 86400)
    planted = {}
    for c in scenario.coupling:
        code = 1 if c.strength > 0 else 0
        planted[f"{c.source}|{c.target}"] = {
            (scenario.start + timedelta(days=d)).date(): code for d in range(n_days)}
    outages = [
        Outage(w.sensor, from_epoch(base + w.start_slot * STEP_SECONDS),
               from_epoch(base + min(w.start_slot + w.length, n) * STEP_SECONDS))
        for w in scenario.outage_windows
    ]
    truth = GroundTruth(
        scenario.start, STEP_SECONDS,
        {sid: true_counts[i] for i, sid in enumerate(sensor_ids)},
        {sid: event_counts[i] for i, sid in enumerate(sensor_ids)},
        planted, outages,
    )
    return events, truth


def write_ground_truth(truth: GroundTruth, stream: TextIO):
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(("sensor_id", "interval_start", "true_count", "event_count"))
    for sid in sorted(truth.true_counts):
        for i, (tc, ec) in enumerate(zip(truth.true_counts[sid].tolist(), truth.event_counts[sid].tolist())):
            writer.writerow((sid, format_ts(truth.start + timedelta(seconds=i * truth.step)), tc, ec))


def load_scenario(stream: TextIO) -> SynthScenario:
    try:
        return SynthScenario.from_dict(json.load(stream))
    except json.JSONDecodeError as exc:
        raise InvalidScenario(f"scenario is not valid JSON: {exc.msg}") from None


def generate_coupled_series(n, lag=1, strength=1.0, alphabet=2, seed=0):
    """Source i.i.d. uniform; target copies ``source[t - lag]`` with probability ``strength``.

    Returns ``(source, target, planted_direction)`` with direction code 1
    (source -> target).
    """
    if n <= lag or lag < 1:
        raise InvalidParameter(f"need n > lag >= 1, got n={n}, lag={lag}")
    if not 0 <= strength <= 1:
        raise InvalidParameter("strength must lie in [0, 1]")
    if alphabet < 2:
        raise InvalidParameter("alphabet must be at least 2")
    rng = np.random.default_rng(seed)
    source = rng.integers(0, alphabet, n)
    target = rng.integers(0, alphabet, n)
    copy = rng.random(n) < strength
    copy[:lag] = False
    target[copy] = source[np.flatnonzero(copy) - lag]
    return source, target, 1


def generate_coupled_counts(n, lag=1, strength=1.0, rate=20.0, seed=0):
    """Count-valued analogue of :func:`generate_coupled_series`.

    Both series are Poisson(``rate``) draws; each target slot is replaced by
    ``source[t - lag]`` with probability ``strength``. Returns floats so the
    arrays can back a :class:`FootfallSeries` directly.
    """
    if n <= lag or lag < 1:
        raise InvalidParameter(f"need n > lag >= 1, got n={n}, lag={lag}")
    if not 0 <= strength <= 1:
        raise InvalidParameter("strength must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    source = rng.poisson(rate, n).astype(float)
    target = rng.poisson(rate, n).astype(float)
    copy = rng.random(n) < strength
    copy[:lag] = False
    target[copy] = source[np.flatnonzero(copy) - lag]
    return source, target


def cohort_scenario(n_sensors=20, n_pairs=100, days=30, base_rate=5.0, seed=0, **overrides):
    """A multi-sensor scenario plus ``n_pairs`` sensor pairs with walking times.

    The first pairs in the list carry lagged couplings so that some pairs have
    a planted direction. Returns ``(scenario, pair_rows)`` where each row is
    ``(sensor_a, sensor_b, walking_seconds)``.
    """
    rng = np.random.default_rng([seed, 0xC0])
    ids = [f"S{i:0{max(2, len(str(n_sensors - 1)))}d}" for i in range(n_sensors)]
    all_pairs = [(a, b) for i, a in enumerate(ids) for b in ids[i + 1 :]]
    if n_pairs > len(all_pairs):
        raise InvalidScenario(f"{n_sensors} sensors give only {len(all_pairs)} pairs")
    chosen = rng.choice(len(all_pairs), n_pairs, replace=False)
    pairs = [all_pairs[i] for i in sorted(chosen.tolist())]
    coupling, inflow = [], {}
    for a, b in pairs:
        if inflow.get(b, 0.0) + 0.4 <= 0.8 and len(coupling) < n_sensors // 2:
            coupling.append(Coupling(a, b, 1, 0.4))
            inflow[b] = inflow.get(b, 0.0) + 0.4
    rows = [(a, b, float(rng.uniform(30.0, 300.0))) for a, b in pairs]
    params = dict(
        n_sensors=n_sensors, n_intervals=days * 288, base_rate=base_rate, diurnal_amplitude=0.6,
        coupling=tuple(coupling), seed=seed, mean_probes=1.5,
    )
    params.update(overrides)
    return SynthScenario(**params), rows
