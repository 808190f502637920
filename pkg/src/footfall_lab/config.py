"""Flat key/value pipeline configuration.

The config file is flat TOML: ``key = value`` lines, ``#`` comments, strings
in double quotes, no tables. Command-line flags override file values.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from zoneinfo import ZoneInfo, ZoneInfoNotFoundError

import tomli
import tomli_w

from .errors import ConfigError, IoError
from .info import STRATEGIES

PATH_KEYS = ("probes", "outages", "footfall", "pairs", "te", "routes", "scenario")


@dataclass(frozen=True)
class PipelineConfig:
    probes: str = ""
    outages: str = ""
    footfall: str = ""
    pairs: str = ""
    te: str = ""
    routes: str = ""
    scenario: str = ""
    step_seconds: int = 300
    dwell_window_minutes: int = 30
    max_gap_minutes: float = 30.0
    bins: int = 4
    strategy: str = "equal_frequency"
    lag: int = 1
    surrogates: int = 100
    alpha: float = 0.05
    epsilon_bits: float = 1e-3
    coverage_threshold: float = 0.9
    quadrant_seconds: float = 150.0
    quadrant_correlation: float = 0.5
    preferred_direction_threshold: float = 10.0
    seed: int = 0
    timezone: str = "UTC"
    lenient: bool = False

    def validate(self):
        def need(cond, key, msg):
            if not cond:
                raise ConfigError(f"{key}: {msg}", key)

        need(self.step_seconds > 0 and 86400 % self.step_seconds == 0, "step_seconds", "must divide one day")
        need(self.dwell_window_minutes > 0 and (self.dwell_window_minutes * 60) % self.step_seconds == 0,
             "dwell_window_minutes", "must be a positive multiple of the step")
        need(self.max_gap_minutes >= 0, "max_gap_minutes", "must be non-negative")
        need(2 <= self.bins <= 64, "bins", "must lie in [2, 64]")
        need(self.strategy in STRATEGIES, "strategy", f"must be one of {', '.join(STRATEGIES)}")
        need(self.lag >= 1, "lag", "must be at least 1")
        need(self.surrogates >= 1, "surrogates", "must be at least 1")
        need(0 < self.alpha < 1, "alpha", "must lie in (0, 1)")
        need(self.epsilon_bits >= 0, "epsilon_bits", "must be non-negative")
        need(0 <= self.coverage_threshold <= 1, "coverage_threshold", "must lie in [0, 1]")
        need(self.quadrant_seconds > 0, "quadrant_seconds", "must be positive")
        need(-1 <= self.quadrant_correlation <= 1, "quadrant_correlation", "must lie in [-1, 1]")
        need(0 <= self.preferred_direction_threshold <= 100, "preferred_direction_threshold", "must lie in [0, 100]")
        need(self.seed >= 0, "seed", "must be non-negative")
        try:
            ZoneInfo(self.timezone)
        except (ZoneInfoNotFoundError, ValueError):
            raise ConfigError(f"timezone: unknown zone {self.timezone!r}", "timezone") from None
        return self

    def replace(self, **changes) -> PipelineConfig:
        return coerce(dataclasses.asdict(self) | changes)

    def to_toml(self) -> str:
        return tomli_w.dumps(dataclasses.asdict(self))


def coerce(values: dict, base: dict | None = None) -> PipelineConfig:
    """Build a validated config from raw values, rejecting unknown keys and bad types."""
    spec = {f.name: f for f in fields(PipelineConfig)}
    merged = dict(base or {})
    for key, value in values.items():
        if key not in spec:
            raise ConfigError(f"unknown config key {key!r}", key)
        kind = type(spec[key].default)
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
            raise ConfigError(f"{key}: expected {kind.__name__}, got {type(value).__name__}", key)
        merged[key] = value
    return PipelineConfig(**merged).validate()


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc.strerror}", str(path)) from None
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    nested = [k for k, v in raw.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"config must be flat; found table {nested[0]!r}", nested[0])
    cfg = coerce(raw)
    # relative paths are taken relative to the config file
    changes = {}
    for key in PATH_KEYS:
        value = getattr(cfg, key)
        if value and not Path(value).is_absolute():
            changes[key] = str((path.parent / value).resolve())
    return cfg.replace(**changes) if changes else cfg
