# SPDX-License-Identifier: GPL-3.0-only

import json

import numpy as np
import pandas as pd
import pytest

from conftest import make_panel
from embedding import Coordinate, View, build_delay_matrix
from exceptions import ConfigError
from reporting import ReportManager


def test_write_frame_formats_floats_and_blanks(tmp_path):
    report = ReportManager(str(tmp_path))
    frame = pd.DataFrame({"time": ["1960-01", "1960-02"], "value": [1.0 / 3.0, np.nan]})
    report.write_frame(frame, "table.csv")
    text = (tmp_path / "table.csv").read_text()
    assert text == "time,value\n1960-01,0.333333333333\n1960-02,\n"
    assert report.written == ["table.csv"]


def test_write_json_is_sorted_and_accepts_numpy(tmp_path):
    report = ReportManager(str(tmp_path))
    report.write_json({"b": np.float64(0.5), "a": np.int64(3), "c": np.arange(2)}, "out.json")
    text = (tmp_path / "out.json").read_text()
    assert text.index('"a"') < text.index('"b"') < text.index('"c"')
    assert json.loads(text) == {"a": 3, "b": 0.5, "c": [0, 1]}


def test_write_panel_uses_month_labels(tmp_path, sine_panel):
    report = ReportManager(str(tmp_path))
    report.write_panel(sine_panel, "panel.csv")
    frame = pd.read_csv(tmp_path / "panel.csv")
    assert list(frame.columns) == ["time", "a", "b"]
    assert frame["time"].iloc[0] == "1960-01"


def test_template_variables_of_the_predict_summary(tmp_path):
    report = ReportManager(str(tmp_path))
    found, variables = report.get_template_variables("predict")
    assert found
    assert {"target", "lead", "correlation", "n_views"} <= variables


def test_missing_template_is_reported(tmp_path):
    report = ReportManager(str(tmp_path))
    found, message = report.get_template_variables("nothing")
    assert not found
    assert message == {"Template nothing not found"}
    ok, error = report.validate_template_variables("nothing", {})
    assert not ok and "not found" in error


def test_summary_with_missing_variables_is_a_config_error(tmp_path):
    report = ReportManager(str(tmp_path))
    with pytest.raises(ConfigError, match="correlation"):
        report.render_summary("predict", {"target": "x"})


def test_template_dir_from_environment(tmp_path, monkeypatch):
    templates = tmp_path / "templates"
    templates.mkdir()
    (templates / "predict.txt").write_text("skill {{ correlation }}\n")
    monkeypatch.setenv("REPORT_TEMPLATE_DIR", str(templates))
    report = ReportManager(str(tmp_path / "out"))
    report.write_summary("predict", {"correlation": 0.5})
    assert (tmp_path / "out" / "summary.txt").read_text() == "skill 0.5\n"


def test_write_delay_matrix_columns(tmp_path):
    panel = make_panel({"a": np.arange(10, dtype=np.float64)})
    matrix = build_delay_matrix(panel, View((Coordinate("a", 0), Coordinate("a", -1)), "a", 1))
    report = ReportManager(str(tmp_path))
    report.write_delay_matrix(matrix, "matrix.csv")
    frame = pd.read_csv(tmp_path / "matrix.csv")
    assert list(frame.columns) == ["target_time", "x1", "x2", "y"]
    assert len(frame) == len(matrix)
    np.testing.assert_allclose(frame[["x1", "x2"]].to_numpy(), matrix.X)
    np.testing.assert_allclose(frame["y"], matrix.Y)
