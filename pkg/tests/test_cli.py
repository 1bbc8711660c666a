import numpy as np
import pytest
import yaml

from umarm.cli import ik_check, main
from umarm.config import read_raw
from umarm.errors import ExperimentError


def test_step_writes_outputs(tmp_path, capsys):
    assert main(["step", "--duration", "7", "--out", str(tmp_path)]) == 0
    assert "5% settling" in capsys.readouterr().out
    assert (tmp_path / "step_response.csv").exists()
    assert (tmp_path / "step_response_summary.txt").exists()


def test_cli_runs_are_byte_identical(tmp_path):
    for k in range(2):
        assert main(["payload", "--duration", "1", "--out", str(tmp_path / str(k))]) == 0
    a = (tmp_path / "0" / "payload_sweep.csv").read_bytes()
    b = (tmp_path / "1" / "payload_sweep.csv").read_bytes()
    assert a == b


def test_unknown_profile_exit_code(capsys):
    assert main(["step", "--profile", "medium"]) == 2
    assert "ConfigError" in capsys.readouterr().err


def test_bad_config_exit_code(tmp_path, capsys):
    path = tmp_path / "c.yaml"
    path.write_text("schema_version: 7\n")
    assert main(["step", "--config", str(path)]) == 2


def test_unreachable_waypoint_exit_code(tmp_path, capsys):
    raw = read_raw()
    raw["waypoints"]["points"] = [[0.0, 0.0, -1.0]]
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump(raw))
    assert main(["waypoints", "--config", str(path)]) == 3
    assert "ExperimentError" in capsys.readouterr().err


def test_input_error_exit_code(capsys):
    assert main(["step", "--duration", "-1"]) == 4


def test_ik_check(cfg, tmp_path, capsys):
    assert main(["ik-check", "--count", "20", "--out", str(tmp_path)]) == 0
    assert "within limits: 20" in capsys.readouterr().out
    rows = np.loadtxt(tmp_path / "ik_check.csv", delimiter=",", comments="#", skiprows=2)
    assert rows.shape == (20, 6)
    with pytest.raises(ExperimentError):
        ik_check(cfg, 5, 0, min_rate=1.01)


def test_missing_subcommand_exits():
    with pytest.raises(SystemExit):
        main([])
