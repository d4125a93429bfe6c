import json

import pytest

from wavelab._cli import cli
from wavelab._logging import LogLevel, logger
from wavelab.exceptions import ExitCode


def test_help_lists_commands(cli_runner):
    result = cli_runner.invoke(cli, ["--help"])
    assert result.exit_code == 0
    for name in ("simulate", "params", "flux-check", "hardy-check", "converge"):
        assert name in result.output


def test_params_valid(cli_runner):
    result = cli_runner.invoke(cli, ["params", "--d", "3", "--p", "3", "--a=-0.2"])
    assert result.exit_code == 0, result.output
    data = json.loads(result.output)
    assert data["valid"]
    assert data["a_min"] == pytest.approx(-0.25)
    assert data["p_e"] == 5.0


def test_params_below_threshold(cli_runner):
    result = cli_runner.invoke(cli, ["params", "--d", "3", "--p", "3", "--a=-0.5"])
    assert result.exit_code == ExitCode.CONFIG_ERROR
    assert "PotentialBelowThreshold" in result.output


def test_params_strichartz(cli_runner):
    arguments = ["params", "--d", "3", "--p", "3", "--a", "0"]
    arguments += ["--strichartz", "4", "4", "0.5", "--strichartz", "2", "6", "0.5"]
    result = cli_runner.invoke(cli, arguments)
    assert result.exit_code == 0, result.output
    admissible, rejected = json.loads(result.output)["strichartz"]
    assert admissible["admissible"]
    assert not rejected["admissible"]
    assert rejected["violations"]


def test_simulate(cli_runner, write_config, small_config, tmp_path):
    out = tmp_path / "cli"
    arguments = ["simulate", "--config", str(write_config(small_config)), "--out", str(out)]
    result = cli_runner.invoke(cli, arguments)
    assert result.exit_code == 0, result.output
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["experiment"] == "simulate"
    assert manifest["config_hash"] == small_config.config_hash
    assert (out / "series" / "energy.csv").is_file()


def test_command_overrides_configured_experiment(cli_runner, write_config, small_config):
    config = small_config.model_copy(update={"experiment": "hardy-check"})
    arguments = ["simulate", "--config", str(write_config(config))]
    result = cli_runner.invoke(cli, arguments)
    assert result.exit_code == 0, result.output
    manifest = json.loads((small_config.output / "manifest.json").read_text())
    assert manifest["experiment"] == "simulate"


def test_assert_exit_code(cli_runner, write_config, small_config):
    strict = small_config.model_copy(
        update={"tolerances": small_config.tolerances.model_copy(update={"drift": -1.0})}
    )
    path = write_config(strict)
    result = cli_runner.invoke(cli, ["simulate", "--config", str(path), "--assert"])
    assert result.exit_code == ExitCode.ACCEPTANCE_FAILURE

    result = cli_runner.invoke(cli, ["simulate", "--config", str(path)])
    assert result.exit_code == 0


def test_invalid_config_exit_code(cli_runner, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"grid": {"spacing": 0.1}}', encoding="utf8")
    result = cli_runner.invoke(cli, ["simulate", "--config", str(path)])
    assert result.exit_code == ExitCode.CONFIG_ERROR
    assert "grid.spacing" in result.output


def test_parameter_error_exit_code(cli_runner, write_config, small_config):
    params = small_config.params.model_copy(update={"a": -1.0})
    path = write_config(small_config.model_copy(update={"params": params}))
    result = cli_runner.invoke(cli, ["simulate", "--config", str(path)])
    assert result.exit_code == ExitCode.CONFIG_ERROR


def test_missing_config_file(cli_runner, tmp_path):
    result = cli_runner.invoke(cli, ["simulate", "--config", str(tmp_path / "nope.json")])
    assert result.exit_code != 0


def test_verbosity(cli_runner, write_config, small_config, tmp_path):
    path = write_config(small_config)
    arguments = ["simulate", "--config", str(path), "--out", str(tmp_path / "debug"), "-v", "DEBUG"]
    result = cli_runner.invoke(cli, arguments)
    assert result.exit_code == 0, result.output
    assert logger.level == LogLevel.DEBUG
    assert "Evolving" in result.output
