import json

import pytest
import yaml

from src.main import main
from src.output import read_field_csv

SMALL = {
    "geometry": {"kind": "cosine", "N_pan": 8},
    "floquet": {"omega": 1.2, "N_kappa": 4},
    "problem": {"x0": [-0.2, 0.35], "targets": [[0.3, 0.45]], "repetitions": 1},
}


def _write_config(tmp_path, **sections):
    data = {name: dict(values) for name, values in SMALL.items()}
    for name, values in sections.items():
        data.setdefault(name, {}).update(values)
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(data))
    return path


def test_missing_config_exit_code(tmp_path):
    assert main(["solve-quasi", "--config", str(tmp_path / "nope.yaml")]) == 2


def test_invalid_config_exit_code(tmp_path):
    path = _write_config(tmp_path, cell={"R_proxy": 0.5})
    assert main(["solve-quasi", "--config", str(path)]) == 2


def test_numerical_failure_exit_code(tmp_path):
    path = _write_config(tmp_path, solver={"schur_residual_tol": 1e-30})
    assert main(["solve-quasi", "--config", str(path), "--out", str(tmp_path)]) == 3


def test_solve_quasi_writes_results(tmp_path):
    path = _write_config(tmp_path)
    out = tmp_path / "out"
    code = main(
        ["solve-quasi", "-c", str(path), "--kappa", "0.97+0.1j", "--mode", "id-half", "--out", str(out)]
    )
    assert code == 0
    points, values = read_field_csv(out / "field.csv")
    assert points.tolist() == [[0.3, 0.45]]
    report = json.loads((out / "report.json").read_text())
    assert report["command"] == "solve-quasi"
    assert report["kappa"] == {"re": 0.97, "im": 0.1}
    assert report["config"]["solver"]["mode"] == "id_half_circle"
    assert report["quasiperiodicity_residual"] < 1e-10
    assert report["targets"]["total"] == [[values[0].real, values[0].imag]]
    assert report["targets"]["response"] != report["targets"]["total"]


def test_flat_aperiodic_reports_image_oracle(tmp_path):
    path = _write_config(tmp_path, geometry={"kind": "flat", "amplitude": 0.0})
    assert main(["solve-aperiodic", "-c", str(path), "--nkappa", "24", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert len(report["kappa_nodes"]) == 24
    assert report["image_oracle"]["rel_error"] < 1e-6


def test_study_command_writes_table(tmp_path):
    path = _write_config(tmp_path)
    code = main(["study", "-c", str(path), "--sweep", "panels", "--values", "4", "8", "--out", str(tmp_path)])
    assert code == 0
    lines = (tmp_path / "table.csv").read_text().splitlines()
    assert lines[0] == "value,N,precompute_s,solve_s,rel_error"
    assert lines[-1].endswith(",")


def test_study_command_can_skip_the_table(tmp_path):
    path = _write_config(tmp_path, output={"write_table": False})
    code = main(["study", "-c", str(path), "--sweep", "panels", "--values", "4", "8", "--out", str(tmp_path)])
    assert code == 0
    assert not (tmp_path / "table.csv").exists()
    assert (tmp_path / "report.json").exists()


def test_unknown_mode_is_a_usage_error():
    with pytest.raises(SystemExit):
        main(["solve-quasi", "--mode", "fmm"])
