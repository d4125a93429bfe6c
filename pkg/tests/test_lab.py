import importlib.metadata
import json

import pytest

from wavelab._utils import read_csv
from wavelab.exceptions import AcceptanceFailure, ConfigInvalid, ExperimentUnknown
from wavelab.lab import EXPERIMENTS, ExperimentConfig, GridConfig, run


@pytest.fixture
def oracle_config(tmp_path):
    """
    A linear free wave in three dimensions, where the exact solution is known.
    """
    return ExperimentConfig.model_validate(
        {
            "experiment": "converge",
            "params": {"d": 3, "p": 3.0, "a": 0.0},
            "grid": {"n": 400, "r_max": 16.0},
            "data": {"family": "gaussian"},
            "solver": {"nonlinearity_on": False, "record_every": 100},
            "t_final": 4.0,
            "options": {"levels": 2},
            "output": str(tmp_path / "converge"),
        }
    )


def test_registry():
    assert set(EXPERIMENTS) == {
        "params",
        "simulate",
        "flux-check",
        "morawetz-check",
        "hardy-check",
        "radiation",
        "scatter",
        "linear-scatter",
        "decay-sweep",
        "converge",
    }


def test_config_round_trip(small_config):
    loaded = ExperimentConfig.from_json(small_config.model_dump_json())
    assert loaded == small_config
    assert loaded.config_hash == small_config.config_hash

    changed = small_config.model_copy(update={"t_final": 3.0})
    assert changed.config_hash != small_config.config_hash


def test_config_from_file(write_config, small_config, tmp_path):
    assert ExperimentConfig.from_file(write_config(small_config)) == small_config
    with pytest.raises(ConfigInvalid):
        ExperimentConfig.from_file(tmp_path / "missing.json")


@pytest.mark.parametrize(
    "text,field_path",
    [
        ('{"grid": {"spacing": 0.1}}', "grid.spacing"),
        ('{"data": {"family": "sinc"}}', "data"),
        ('{"solver": {"cfl": 0.9}}', "solver.cfl"),
        ('{"t_final": "soon"}', "t_final"),
    ],
)
def test_config_invalid_field_path(text, field_path):
    with pytest.raises(ConfigInvalid) as info:
        ExperimentConfig.from_json(text)

    assert info.value.field_path == field_path
    assert str(info.value).startswith(f"{field_path}: ")


def test_grid_config_needs_two_of_three():
    grid = GridConfig(dr=0.5, r_max=8.0).build(3)
    assert grid.n == 16
    assert GridConfig(n=16, dr=0.5).build(3).r_max == 8.0

    with pytest.raises(ConfigInvalid) as info:
        GridConfig(n=100).build(3)

    assert info.value.field_path == "grid"
    with pytest.raises(ConfigInvalid):
        GridConfig(n=1, r_max=1.0).build(3)


def test_refined(small_config):
    refined = small_config.refined(2)
    assert refined.radial_grid().n == 800
    assert refined.radial_grid().r_max == 16.0
    assert refined.solver.record_every == 16
    assert refined.t_final == small_config.t_final


def test_solver_config_overrides(small_config):
    solver = small_config.solver_config(nonlinearity_on=False)
    assert not solver.nonlinearity_on
    assert solver.potential_on
    assert solver.t_final == 2.0
    assert small_config.solver_config(t_final=1.0).t_final == 1.0


def test_unknown_experiment(small_config):
    with pytest.raises(ExperimentUnknown) as info:
        run(small_config.model_copy(update={"experiment": "nope"}))

    assert "simulate" in str(info.value)


def test_simulate_writes_artifacts(small_config):
    out = small_config.output
    manifest = run(small_config)
    paths = [entry.path for entry in manifest.files]
    assert paths[:3] == ["report.json", "series/energy.csv", "series/snapshot_00000.csv"]
    assert all(path.startswith("series/snapshot_") for path in paths[2:])
    assert (out / "manifest.json").is_file()

    report = json.loads((out / "report.json").read_text())
    assert report["experiment"] == "simulate"
    assert report["config_hash"] == small_config.config_hash
    assert report["constants"]["p_e"] == 5.0
    assert report["results"]["t_final"] == 2.0
    assert "oracle_error" not in report["results"]
    assert {check["name"] for check in report["checks"]} == {"energy_drift"}

    metadata, columns = read_csv(out / "series" / "energy.csv")
    assert metadata["d"] == "3"
    assert list(columns) == ["t", "energy"]
    assert columns["t"][0] == 0.0
    assert columns["t"][-1] == 2.0

    metadata, columns = read_csv(out / paths[-1])
    assert float(metadata["t"]) == 2.0
    assert list(columns) == ["r", "u", "u_t"]
    assert len(columns["r"]) == 201


def test_simulate_without_snapshots(small_config):
    options = small_config.options.model_copy(update={"snapshots": False})
    manifest = run(small_config.model_copy(update={"options": options}))
    assert [entry.path for entry in manifest.files] == ["report.json", "series/energy.csv"]


def test_runs_are_byte_identical(small_config, tmp_path):
    first = run(small_config, out=tmp_path / "first")
    second = run(small_config, out=tmp_path / "second")
    assert [entry.sha256 for entry in first.files] == [entry.sha256 for entry in second.files]
    for name in ("report.json", "series/energy.csv"):
        assert (tmp_path / "first" / name).read_bytes() == (tmp_path / "second" / name).read_bytes()


def test_assert_raises_acceptance_failure(small_config):
    strict = small_config.model_copy(
        update={"tolerances": small_config.tolerances.model_copy(update={"drift": -1.0})}
    )
    with pytest.raises(AcceptanceFailure) as info:
        run(strict, assert_checks=True)

    assert info.value.failed == ["energy_drift"]
    manifest = json.loads((strict.output / "manifest.json").read_text())
    assert manifest["passed"] is False


def test_failed_checks_without_assert(small_config):
    strict = small_config.model_copy(
        update={"tolerances": small_config.tolerances.model_copy(update={"drift": -1.0})}
    )
    assert not run(strict).passed


def test_params_experiment(small_config):
    config = small_config.model_copy(update={"experiment": "params"})
    manifest = run(config)
    assert [entry.path for entry in manifest.files] == ["report.json"]
    assert manifest.passed
    report = json.loads((config.output / "report.json").read_text())
    assert report["results"]["verdict"]["valid"]
    assert report["results"]["form_equivalence"]["lower"] == pytest.approx(0.04)


def test_params_experiment_invalid(small_config):
    params = small_config.params.model_copy(update={"a": -0.5})
    config = small_config.model_copy(update={"experiment": "params", "params": params})
    manifest = run(config)
    assert not manifest.passed
    report = json.loads((config.output / "report.json").read_text())
    assert report["constants"] is None
    assert report["results"]["verdict"]["violation"] == "PotentialBelowThreshold"


def test_simulate_free_wave_reports_oracle(oracle_config):
    config = oracle_config.model_copy(update={"experiment": "simulate"})
    result = EXPERIMENTS["simulate"](config)
    assert result.report["oracle_error"]["u"] <= 5e-3
    assert {check.name for check in result.checks} == {"energy_drift", "oracle_error"}


def test_hardy_check_witness():
    config = ExperimentConfig.model_validate(
        {
            "experiment": "hardy-check",
            "params": {"d": 3, "p": 3.0, "a": 0.5},
            "grid": {"n": 2000, "r_max": 2.0},
            "options": {"samples": 5, "radii": [1.0], "witness_a": [1.0]},
        }
    )
    result = EXPERIMENTS["hardy-check"](config)
    assert result.report["samples"] == 5
    [witness] = result.report["witnesses"]
    assert witness["a"] == 1.0
    assert witness["R"] == 1.0
    assert witness["ratio"] <= 1e-5
    assert len(result.series["hardy"].columns["R"]) == 5
    assert result.report["sharp_hardy_gap"] > 0


def test_converge_orders(oracle_config, monkeypatch):
    monkeypatch.delenv("WAVELAB_THREADS", raising=False)
    result = EXPERIMENTS["converge"](oracle_config)
    assert result.report["target"] == "simulate"
    assert result.report["spacings"] == pytest.approx([0.04, 0.02])
    assert 1.5 <= result.report["orders"]["oracle_error"] <= 2.5
    assert result.report["orders"]["energy_drift"] >= 1.7
    assert {check.name for check in result.checks} == {"order[energy_drift]", "order[oracle_error]"}
    assert list(result.series["convergence"].columns) == ["dr", "energy_drift", "oracle_error"]


def test_license_metadata_agrees():
    try:
        info = importlib.metadata.metadata("wavelab")
    except importlib.metadata.PackageNotFoundError:
        pytest.skip("wavelab is not installed")

    assert "Apache-2.0" in (info["License"], info["License-Expression"])
    classifiers = info.get_all("Classifier") or []
    assert "License :: OSI Approved :: Apache Software License" in classifiers
    assert not [c for c in classifiers if c.startswith("License ::") and "Apache" not in c]
