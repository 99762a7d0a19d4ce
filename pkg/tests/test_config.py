from pathlib import Path

import numpy as np
import pytest
import yaml

from src.config import RunConfig, config_from_dict, load_config
from src.errors import ConfigError
from src.geometry import curve_from_config

EXAMPLE = Path(__file__).parent.parent / "config.example.yaml"


def test_example_config_matches_defaults():
    config = load_config(EXAMPLE)
    defaults = RunConfig()
    assert config.geometry == defaults.geometry
    assert config.cell == defaults.cell
    assert config.solver == defaults.solver
    assert config.floquet == defaults.floquet
    assert config.output == defaults.output
    assert config.problem.x0 == defaults.problem.x0
    assert config.problem.targets == defaults.problem.targets


def test_missing_file_hint(tmp_path):
    with pytest.raises(FileNotFoundError, match="config.example.yaml"):
        load_config(tmp_path / "config.yaml")


def test_empty_file_gives_defaults(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text("")
    assert load_config(path) == RunConfig()


def test_aliases_and_complex_kappa():
    config = config_from_dict(
        {
            "solver": {"mode": "id-half"},
            "floquet": {"grading": "pi", "kappa": "0.97 + 0.1j"},
        }
    )
    assert config.solver.mode == "id_half_circle"
    assert config.floquet.grading == "pi_over_d"
    assert config.floquet.resolved_kappa == 0.97 + 0.1j
    assert RunConfig().floquet.resolved_kappa.real == pytest.approx(1.2 * 0.80901699437)


@pytest.mark.parametrize(
    ("data", "field"),
    [
        ({"geometry": {"N_pan": 2.5}}, "geometry.N_pan"),
        ({"geometry": {"kind": "sawtooth"}}, "geometry.kind"),
        ({"geometry": {"kind": "stair", "N_pan": 7}}, "geometry.N_pan"),
        ({"geometry": {"N_ref": 2}}, "geometry.N_ref"),
        ({"cell": {"M_w": 41}}, "cell.M_w"),
        ({"cell": {"colour": "red"}}, "cell.colour"),
        ({"solver": {"mode": "fmm"}}, "solver.mode"),
        ({"solver": {"near_eval": "shout"}}, "solver.near_eval"),
        ({"solver": {"neighbor_proxy": "square"}}, "solver.neighbor_proxy"),
        ({"floquet": {"grading": "zero", "N_kappa": 15}}, "floquet.N_kappa"),
        ({"floquet": {"omega": -1}}, "floquet.omega"),
        ({"problem": {"x0": [1, 2, 3]}}, "problem.x0"),
        ({"problem": {"grid": {"x": [0, 1]}}}, "problem.grid"),
        ({"output": {"write_field": "yes"}}, "output.write_field"),
        ({"output": {"write_table": "no"}}, "output.write_table"),
        ({"plotting": {}}, "plotting"),
    ],
)
def test_invalid_values_name_their_field(data, field):
    with pytest.raises(ConfigError) as info:
        config_from_dict(data)
    assert info.value.field == field


def test_with_overrides():
    config = RunConfig().with_overrides(
        mode="corner", grading="zero", b=3, n_kappa=40, workers=4, out_dir=Path("/tmp/x"), N_pan=16
    )
    assert config.solver.mode == "corner_compression"
    assert config.floquet.grading == "zero"
    assert config.floquet.b == 3.0
    assert config.floquet.N_kappa == 40
    assert config.floquet.workers == 4
    assert config.output.out_dir == Path("/tmp/x")
    assert config.geometry.N_pan == 16
    with pytest.raises(ConfigError):
        RunConfig().with_overrides(workers=0)


def test_to_dict_is_plain_yaml():
    data = RunConfig().with_overrides(out_dir=Path("out")).to_dict()
    assert data["output"]["out_dir"] == "out"
    assert yaml.safe_load(yaml.safe_dump(data)) == data


def test_grid_parsing():
    config = config_from_dict({"problem": {"grid": {"x": [-1, 1, 5], "y": [0.1, 1, 3]}}})
    assert config.problem.grid.x == (-1.0, 1.0, 5)
    assert config.problem.grid.y == (0.1, 1.0, 3)


def test_example_stair_keys_give_documented_rise_and_run(tmp_path):
    text = EXAMPLE.read_text()
    text = text.replace("kind: cosine ", "kind: stair  ")
    text = text.replace("# step_height: 0.5", "step_height: 0.3  ").replace("# x_left: -0.5", "x_left: -0.4  ")
    path = tmp_path / "config.yaml"
    path.write_text(text)
    geometry = load_config(path).geometry
    assert (geometry.kind, geometry.step_height, geometry.x_left) == ("stair", 0.3, -0.4)
    curve = curve_from_config(geometry)
    corners = curve.position(np.array([0.0, 1.0, 2.0]))
    assert np.allclose(corners, [[-0.4, 0.0], [0.1, 0.3], [0.6, 0.0]])


def test_neighbor_proxy_and_table_flag():
    config = config_from_dict(
        {"solver": {"neighbor_proxy": "full_circle"}, "output": {"write_table": False}}
    )
    assert config.solver.neighbor_proxy == "full_circle"
    assert config.output.write_table is False
    assert RunConfig().solver.neighbor_proxy == "half_circle"
