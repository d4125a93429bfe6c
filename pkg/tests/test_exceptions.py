from typing import get_args

import pytest

from wavelab._logging import logger
from wavelab.exceptions import (
    EXIT_CODE_MAP,
    AcceptanceFailure,
    ConfigInvalid,
    DimensionOutOfRange,
    DomainTooSmall,
    ErrorUnion,
    ExitCode,
    ExperimentUnknown,
    InsufficientHorizon,
    PotentialBelowThreshold,
    StabilityViolation,
    WaveLabError,
    exit_code_for,
)

MESSAGE = "__message__"
STEP = 123
TIME = 4.5
ENERGY_BEFORE = 1.25
ENERGY_AFTER = 9.75


@pytest.fixture(scope="module")
def stability_error():
    return StabilityViolation(
        MESSAGE,
        step=STEP,
        t=TIME,
        energy_before=ENERGY_BEFORE,
        energy_after=ENERGY_AFTER,
    )


def test_stability_violation(stability_error):
    actual = str(stability_error)
    assert MESSAGE in actual
    assert f"{STEP}" not in actual
    assert f"{ENERGY_BEFORE}" not in actual
    assert f"{ENERGY_AFTER}" not in actual


def test_stability_violation_verbose(stability_error):
    logger.set_level("DEBUG")
    actual = str(stability_error)
    assert MESSAGE in actual
    assert f"step={STEP}" in actual
    assert f"{TIME}" in actual
    assert f"{ENERGY_BEFORE}" in actual
    assert f"{ENERGY_AFTER}" in actual
    logger.set_level("INFO")


def test_stability_violation_verbose_without_step():
    logger.set_level("DEBUG")
    assert str(StabilityViolation(MESSAGE)) == MESSAGE
    logger.set_level("INFO")


def test_parameter_error_carries_bound():
    error = PotentialBelowThreshold(-0.5, -0.25)
    assert error.bound == -0.25
    assert error.name == "a"
    assert "a=-0.5" in str(error)
    assert isinstance(error, ValueError)


def test_config_invalid_field_path():
    error = ConfigInvalid("Extra inputs are not permitted", field_path="grid.spacing")
    assert str(error) == "grid.spacing: Extra inputs are not permitted"
    assert error.field_path == "grid.spacing"


def test_experiment_unknown_lists_choices():
    error = ExperimentUnknown("nope", ["simulate", "converge"])
    assert "nope" in str(error)
    assert "simulate, converge" in str(error)


@pytest.mark.parametrize(
    "error,code",
    [
        (ConfigInvalid("bad"), ExitCode.CONFIG_ERROR),
        (ExperimentUnknown("x", []), ExitCode.CONFIG_ERROR),
        (DimensionOutOfRange(7, 6, "<="), ExitCode.CONFIG_ERROR),
        (DomainTooSmall(8.0, 12.0), ExitCode.CONFIG_ERROR),
        (InsufficientHorizon("short"), ExitCode.CONFIG_ERROR),
        (StabilityViolation("boom"), ExitCode.NUMERICAL_GUARD),
        (AcceptanceFailure(["energy_drift"]), ExitCode.ACCEPTANCE_FAILURE),
        (WaveLabError("other"), ExitCode.FAILURE),
        (RuntimeError("foreign"), ExitCode.FAILURE),
    ],
)
def test_exit_code_for(error, code):
    assert exit_code_for(error) == code


def test_every_error_has_an_exit_code():
    assert set(EXIT_CODE_MAP) == set(get_args(ErrorUnion))
    assert all(code != ExitCode.SUCCESS for code in EXIT_CODE_MAP.values())
