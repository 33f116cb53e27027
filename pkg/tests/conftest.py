"""Shared fixtures: scenario files, small media, meshes and forward models."""
from pathlib import Path

import numpy as np
import pytest

from od_enclosure.core.config import EnclosureConfig
from od_enclosure.core.fem import ForwardModel, generate_mesh
from od_enclosure.core.geometry import rectangle, regular_polygon
from od_enclosure.core.medium import ConstantTensor, MediumSpec, RotatedTensor
from od_enclosure.core.read import read_scenario

SCENARIO_DIR = Path(__file__).parent.joinpath("scenarios")
FIXTURE_DIR = Path(__file__).parent.joinpath("scenario_fixtures")


def pytest_addoption(parser):
    parser.addoption(
        "--run-slow", action="store_true", default=False, help="Run desk-scale acceptance tests."
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="desk-scale run, use --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture()
def get_scenario_path():
    def _get_scenario_path(name):
        return SCENARIO_DIR.joinpath(name)

    return _get_scenario_path


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def unit_square():
    return rectangle((0.0, 0.0), (1.0, 1.0))


@pytest.fixture(scope="session")
def disk():
    """The S1 inclusion: centre (0.5, 0.6), radius 0.15."""
    return regular_polygon((0.5, 0.6), 0.15, 32)


@pytest.fixture(scope="session")
def s1_medium(unit_square, disk):
    return MediumSpec(
        domain=unit_square,
        a0=ConstantTensor(((1.0, 0.0), (0.0, 1.0))),
        a_tilde=RotatedTensor((3.0, 6.0), 0.3),
        inclusion=disk,
        k=1.0,
    )


@pytest.fixture(scope="session")
def null_medium(unit_square, disk):
    background = ConstantTensor(((2.0, 0.5), (0.5, 1.0)))
    return MediumSpec(
        domain=unit_square, a0=background, a_tilde=background, inclusion=disk, k=0.0
    )


@pytest.fixture(scope="session")
def coarse_mesh(s1_medium):
    return generate_mesh(s1_medium.domain, 1 / 16, s1_medium.inclusion)


@pytest.fixture(scope="session")
def s1_model(s1_medium, coarse_mesh):
    return ForwardModel(s1_medium, coarse_mesh)


@pytest.fixture()
def fast_config():
    """A short configuration: coarse meshes, few basis elements, one worker."""
    return EnclosureConfig(
        h_mesh=1 / 16,
        tau_min=4.0,
        tau_max=64.0,
        tau_points=6,
        basis_count=32,
        chain_points=256,
        n_omega=8,
        jobs=1,
    )


@pytest.fixture(scope="session")
def s1_scenario():
    """S1 at ``h_mesh = 1/128``, for the desk-scale runs."""
    return read_scenario(SCENARIO_DIR.joinpath("s1.yaml"))


@pytest.fixture(scope="session")
def s1_fine_model(s1_scenario):
    return ForwardModel(s1_scenario.medium, s1_scenario.forward_mesh())
