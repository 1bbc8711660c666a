import numpy as np
import pytest
import yaml

from umarm.config import Config, load_config, read_raw
from umarm.errors import ConfigError


def test_default_config_loads(cfg):
    assert set(cfg.profiles) == {"high-aggressive", "low-aggressive", "low-conservative"}
    np.testing.assert_array_equal(cfg.profile("high-aggressive").p_A, np.repeat([83.0, 55.0, 28.0], 4))
    assert cfg.sim.dt == 1e-3 and cfg.control_rate == 100.0
    assert cfg.waypoints.shape == (8, 3)
    assert len(cfg.joints) == 12


def test_unknown_profile_lists_known(cfg):
    with pytest.raises(ConfigError, match="high-aggressive"):
        cfg.profile("nope")


def test_overrides_do_not_touch_original(cfg):
    new = cfg.with_overrides(sim={"dt": 5e-4})
    assert new.sim.dt == 5e-4
    assert cfg.sim.dt == 1e-3
    assert new.sim.tau_fill == cfg.sim.tau_fill


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda r: r.pop("schema_version"), "schema_version"),
        (lambda r: r.__setitem__("schema_version", 2), "schema_version"),
        (lambda r: r.pop("geometry"), "geometry"),
        (lambda r: r["geometry"].pop("rod_length"), "rod_length"),
        (lambda r: r["profiles"]["low-aggressive"].__setitem__("gains", "missing"), "unknown gains"),
        (lambda r: r["profiles"]["low-aggressive"].__setitem__("p_a_kpa", [14.0, 14.0]), "three p_A"),
        (lambda r: r["profiles"]["low-aggressive"].__setitem__("p_a_kpa", [14.0, 14.0, 900.0]), "three p_A"),
        (lambda r: r["sim"].__setitem__("dt", 3e-3), "whole number"),
        (lambda r: r["ik"].__setitem__("bogus", 1), "bad config value"),
    ],
)
def test_invalid_configs_raise(mutate, message):
    raw = read_raw()
    mutate(raw)
    with pytest.raises(ConfigError, match=message):
        Config(raw)


def test_load_from_file(tmp_path):
    raw = read_raw()
    raw["controller"]["derate_gamma"] = 2.0
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump(raw))
    assert load_config(path).derate_gamma == 2.0


def test_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("a: [1, 2\n")
    with pytest.raises(ConfigError):
        load_config(bad)
    bad.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(bad)
