import dataclasses

import pytest
import tomli

from footfall_lab.config import PipelineConfig, coerce, load_config
from footfall_lab.errors import ConfigError, IoError


def test_defaults_valid():
    cfg = PipelineConfig().validate()
    assert cfg.step_seconds == 300 and cfg.dwell_window_minutes == 30 and cfg.max_gap_minutes == 30.0
    assert cfg.bins == 4 and cfg.lag == 1 and cfg.surrogates == 100 and cfg.alpha == 0.05
    assert cfg.quadrant_seconds == 150.0 and cfg.quadrant_correlation == 0.5
    assert cfg.preferred_direction_threshold == 10.0


def test_unknown_key_rejected(tmp_path):
    (tmp_path / "c.toml").write_text("bins = 4\nbinz = 5\n")
    with pytest.raises(ConfigError) as err:
        load_config(tmp_path / "c.toml")
    assert err.value.key == "binz"


def test_tables_rejected(tmp_path):
    (tmp_path / "c.toml").write_text("[te]\nbins = 4\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "c.toml")


@pytest.mark.parametrize(
    "values, key",
    [
        ({"bins": "four"}, "bins"),
        ({"bins": 1}, "bins"),
        ({"alpha": 1.5}, "alpha"),
        ({"dwell_window_minutes": 7}, "dwell_window_minutes"),
        ({"strategy": "kmeans"}, "strategy"),
        ({"timezone": "Mars/Olympus"}, "timezone"),
        ({"lenient": 1}, "lenient"),
        ({"lag": True}, "lag"),
    ],
)
def test_invalid_values_name_key(values, key):
    with pytest.raises(ConfigError) as err:
        coerce(values)
    assert err.value.key == key


def test_int_promoted_to_float():
    assert coerce({"max_gap_minutes": 45}).max_gap_minutes == 45.0


def test_relative_paths_resolve_against_config_dir(tmp_path):
    (tmp_path / "sub").mkdir()
    (tmp_path / "sub" / "c.toml").write_text('probes = "data/p.jsonl"\npairs = "/abs/pairs.csv"\n')
    cfg = load_config(tmp_path / "sub" / "c.toml")
    assert cfg.probes == str((tmp_path / "sub" / "data" / "p.jsonl").resolve())
    assert cfg.pairs == "/abs/pairs.csv"


def test_toml_round_trip():
    cfg = coerce({"bins": 6, "timezone": "Europe/London", "probes": "/x/p.jsonl", "lenient": True})
    assert coerce(tomli.loads(cfg.to_toml())) == cfg


def test_replace_validates():
    cfg = PipelineConfig()
    assert cfg.replace(seed=4).seed == 4
    with pytest.raises(ConfigError):
        cfg.replace(surrogates=0)
    assert dataclasses.asdict(cfg) == dataclasses.asdict(PipelineConfig())


def test_missing_config_file(tmp_path):
    with pytest.raises(IoError) as err:
        load_config(tmp_path / "absent.toml")
    assert err.value.path == str(tmp_path / "absent.toml")
