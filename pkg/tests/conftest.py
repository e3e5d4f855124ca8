"""
Pytest configuration and fixtures for k2gof tests

Fixtures build the reference-study setup once per session: the builtin
models on [1,20]x[1,25], the 50x40 grid, a data set drawn from Q and the
reference and candidate models fitted to it.

Key Fixtures:
- study_grid: 50x40 midpoint grid over the reference support
- unit_grid: small grid over the unit square for quadrature oracles
- registry: builtin model specs keyed by name
- q_instance: Q at its default parameters
- q_data: 100 points sampled from q_instance with a fixed stream
- fitted: Q, F1, F2, F3 fitted to q_data (ModelInstance per name)
- q_plan: Q's projection plan at its fitted parameters
- rotation_plans: rotation plans from fitted Q to each fitted model
- points_csv: factory writing a points CSV into tmp_path

Usage:
    def test_something(fitted, study_grid):
        assert fitted["Q"].grid is study_grid
"""

import logging
from pathlib import Path
from typing import Callable, Dict

import numpy as np
import pytest
import structlog.testing

from k2gof.config.settings import STUDY_GRID
from k2gof.estimation.fit import mle_fit
from k2gof.models.base import ModelInstance, instantiate, sample
from k2gof.models.builtin import study_support, register_builtin_models
from k2gof.process.projection import build_projection_plan
from k2gof.quadrature.grid import SupportRect, build_grid
from k2gof.rotation.k2 import build_rotation_plan
from k2gof.simulation.rng import RngStream
from k2gof.utils.data_processing import write_points_csv

TEST_SEED = 20190917


@pytest.fixture(scope="session")
def study_grid():
    return build_grid(study_support(), *STUDY_GRID)


@pytest.fixture(scope="session")
def unit_grid():
    """10 x 8 grid over the unit square (cell weight 1/80)"""
    return build_grid(SupportRect((0.0, 0.0), (1.0, 1.0)), 10, 8)


@pytest.fixture(scope="session")
def registry():
    return register_builtin_models()


@pytest.fixture(scope="session")
def q_instance(registry, study_grid) -> ModelInstance:
    spec = registry["Q"]
    return instantiate(spec, spec.default_params(), study_grid)


@pytest.fixture(scope="session")
def q_data(q_instance) -> np.ndarray:
    return sample(q_instance, 100, RngStream(TEST_SEED, 0, "tests"))


@pytest.fixture(scope="session")
def fitted(registry, q_data, study_grid) -> Dict[str, ModelInstance]:
    """
    Q and the three candidates fitted to the same Q sample

    Instances are built from the best point found whether or not the
    gradient check passed; the rotation identities hold at any parameters.
    """
    out = {}
    for name in ("Q", "F1", "F2", "F3"):
        spec = registry[name]
        fit = mle_fit(spec, q_data, study_grid)
        out[name] = instantiate(spec, fit.params, study_grid)
    return out


@pytest.fixture(scope="session")
def q_plan(fitted, study_grid):
    return build_projection_plan(fitted["Q"], study_grid)


@pytest.fixture(scope="session")
def rotation_plans(fitted, q_plan, study_grid):
    return {
        name: build_rotation_plan(fitted["Q"], inst, study_grid, q_plan)
        for name, inst in fitted.items()
    }


@pytest.fixture
def points_csv(tmp_path) -> Callable[..., Path]:
    """Factory: points_csv(points, name="data.csv") -> path of the written CSV"""

    def write(points: np.ndarray, name: str = "data.csv") -> Path:
        return write_points_csv(tmp_path / name, points)

    return write


@pytest.fixture(autouse=True)
def reset_logging():
    """Reset logging configuration before each test"""
    for handler in logging.root.handlers[:]:
        logging.root.removeHandler(handler)
    logging.root.setLevel(logging.WARNING)


@pytest.fixture
def capture_logs():
    """Capture structlog events as a list of dicts"""
    with structlog.testing.capture_logs() as events:
        yield events


# Pytest configuration
def pytest_configure(config):
    """Pytest configuration"""
    config.addinivalue_line(
        "markers", "slow: marks tests as slow (deselect with '-m \"not slow\"')"
    )
    config.addinivalue_line(
        "markers", "integration: marks tests as integration tests"
    )
    config.addinivalue_line(
        "markers", "unit: marks tests as unit tests"
    )


def pytest_collection_modifyitems(config, items):
    """Add the unit marker to every test not marked integration or slow"""
    for item in items:
        if "test_main" in str(item.fspath):
            item.add_marker(pytest.mark.integration)

        if not any(mark.name in ["integration", "slow"] for mark in item.iter_markers()):
            item.add_marker(pytest.mark.unit)
