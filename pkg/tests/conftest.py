from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from wavelab._logging import logger
from wavelab.exponents import validate
from wavelab.lab import ExperimentConfig
from wavelab.mesh import RadialGrid
from wavelab.solver import SolverConfig, evolve, gaussian


@pytest.fixture(autouse=True)
def reset_log_level():
    yield
    logger.set_level("INFO")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def cli_runner():
    return CliRunner()


@pytest.fixture(scope="session")
def reference_params():
    return validate(3, 3.0, -0.2)


@pytest.fixture(scope="session")
def free_params():
    return validate(3, 3.0, 0.0)


def make_config(params, n=800, r_max=16.0, t_final=8.0, **kwargs) -> SolverConfig:
    grid = RadialGrid(d=params.d, n=n, r_max=r_max)
    return SolverConfig(params=params, grid=grid, t_final=t_final, **kwargs)


@pytest.fixture(scope="session")
def nonlinear_trajectory(reference_params):
    """
    The desk-scale nonlinear run shared by the energy and virial tests.
    """
    config = make_config(reference_params, n=800, r_max=16.0, t_final=8.0, record_every=4)
    data = gaussian()
    return evolve(data.state(config.grid), config)


@pytest.fixture
def write_config(tmp_path):
    """
    Write an experiment configuration to a temporary JSON file.
    """

    def _write(config: ExperimentConfig, name: str = "config.json") -> Path:
        path = tmp_path / name
        path.write_text(config.model_dump_json(indent=2), encoding="utf8")
        return path

    return _write


@pytest.fixture
def small_config(tmp_path):
    """
    A desk-scale experiment configuration writing into a temporary directory.
    """
    return ExperimentConfig.model_validate(
        {
            "experiment": "simulate",
            "params": {"d": 3, "p": 3.0, "a": -0.2},
            "grid": {"n": 200, "r_max": 16.0},
            "data": {"family": "gaussian"},
            "solver": {"record_every": 4},
            "t_final": 2.0,
            "output": str(tmp_path / "out"),
        }
    )
