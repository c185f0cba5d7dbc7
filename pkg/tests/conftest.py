import json
import math
from importlib.resources import files
from pathlib import Path

import numpy as np
import pytest

from thintransport import config

FIXTURES = Path(str(files("thintransport") / "fixtures"))
DATA = Path(__file__).parent / "data"


def fixture_path(*parts) -> Path:
    return FIXTURES.joinpath(*parts)


def angle_gap(a: float, b: float) -> float:
    """Distance between two angles on the circle."""
    d = (a - b) % (2 * math.pi)
    return min(d, 2 * math.pi - d)


@pytest.fixture(scope="session")
def sphere():
    return config.load_connection(fixture_path("sphere.toml"))


@pytest.fixture(scope="session")
def flux():
    return config.load_connection(fixture_path("flux.toml"))


@pytest.fixture(scope="session")
def flux_wave():
    return config.load_connection(fixture_path("flux_wave.toml"))


@pytest.fixture(scope="session")
def torus():
    return config.load_connection(fixture_path("torus.toml"))


@pytest.fixture(scope="session")
def so3():
    return config.load_connection(fixture_path("gauge_so3.toml"))


@pytest.fixture(scope="session")
def flux_cover():
    return config.load_connection(fixture_path("flux_cover.toml"))


@pytest.fixture(scope="session")
def sphere_oracle():
    return json.loads((DATA / "sphere_oracle.json").read_text())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
