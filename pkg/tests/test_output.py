import json
import math

import numpy as np
import pytest

from src.output import (
    read_field_csv,
    to_jsonable,
    version_stamp,
    write_field_csv,
    write_report_json,
    write_table_csv,
)


def test_field_csv_is_exact(tmp_path):
    points = np.array([[0.1, 1.0 / 3.0], [-2.5, 7e-12]])
    values = np.array([1.0 / 7.0 - 2j, -0.0 + 1e-300j])
    path = write_field_csv(tmp_path / "sub" / "field.csv", points, values)
    assert path.read_text().splitlines()[0] == "x,y,re_u,im_u"
    read_points, read_values = read_field_csv(path)
    assert np.array_equal(read_points, points)
    assert np.array_equal(read_values, values)


def test_field_csv_length_mismatch(tmp_path):
    with pytest.raises(ValueError):
        write_field_csv(tmp_path / "field.csv", [[0, 0], [1, 1]], [1.0])


def test_read_field_csv_rejects_other_columns(tmp_path):
    path = tmp_path / "table.csv"
    path.write_text("value,N\n4,64\n")
    with pytest.raises(ValueError, match="expected columns"):
        read_field_csv(path)


def test_table_csv_blank_cells(tmp_path):
    rows = [{"value": 4, "rel_error": 1.5e-3}, {"value": 8, "rel_error": None}]
    path = write_table_csv(tmp_path / "table.csv", rows, ["value", "rel_error"])
    assert path.read_text().splitlines() == ["value,rel_error", "4,0.0015", "8,"]


def test_to_jsonable():
    data = to_jsonable(
        {
            "kappa": 0.5 - 1j,
            "array": np.arange(3),
            "bad": math.nan,
            "count": np.int64(7),
            "nested": (np.float64(1.5), math.inf),
        }
    )
    assert data == {
        "kappa": {"re": 0.5, "im": -1.0},
        "array": [0, 1, 2],
        "bad": None,
        "count": 7,
        "nested": [1.5, None],
    }


def test_report_json(tmp_path):
    path = write_report_json(tmp_path / "report.json", {"z": 1, "a": np.array([1j])})
    text = path.read_text()
    report = json.loads(text)
    assert report["version"] == version_stamp()
    assert report["a"] == [{"re": 0.0, "im": 1.0}]
    assert text.index('"a"') < text.index('"version"') < text.index('"z"')
