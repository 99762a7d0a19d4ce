import numpy as np
import pytest

from src.config import config_from_dict
from src.geometry import curve_from_config
from src.solver import precompute

STAIR_SOURCE = [-0.1, 0.7]
STAIR_TARGET = [0.3, 0.6]


def make_config(tmp_dir=None, **sections):
    """Run configuration with default cell parameters; keyword sections override defaults."""
    data = {
        "geometry": {"kind": "cosine", "N_pan": 8},
        "floquet": {"omega": 1.2, "N_kappa": 8},
        "problem": {"x0": [-0.2, 0.35], "targets": [[0.3, 0.45], [0.1, 1.4]], "repetitions": 1},
        "output": {"out_dir": str(tmp_dir or "results")},
    }
    for name, values in sections.items():
        data.setdefault(name, {}).update(values)
    return config_from_dict(data)


def stair_config(**overrides):
    geometry = {"kind": "stair", "N_pan": 8, "N_ref": 4}
    geometry.update(overrides.pop("geometry", {}))
    problem = {"x0": STAIR_SOURCE, "targets": [STAIR_TARGET]}
    problem.update(overrides.pop("problem", {}))
    return make_config(geometry=geometry, problem=problem, **overrides)


def build(config):
    return precompute(curve_from_config(config.geometry), config)


@pytest.fixture(scope="session")
def cosine_dense():
    return build(make_config())


@pytest.fixture(scope="session")
def cosine_id_half():
    return build(make_config(solver={"mode": "id-half"}))


@pytest.fixture(scope="session")
def cosine_id_full():
    return build(make_config(solver={"mode": "id-full"}))


@pytest.fixture(scope="session")
def stair_dense():
    return build(stair_config())


@pytest.fixture(scope="session")
def stair_corner():
    return build(stair_config(solver={"mode": "corner"}))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
