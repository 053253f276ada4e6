# SPDX-License-Identifier: GPL-3.0-only

import json
import os

import numpy as np
import pandas as pd
import pytest

from cli import main


def _config(**overrides) -> dict:
    config = {
        "data": {"surrogate": {"system": "lorenz63", "radius": 0.01, "n_runs": 5, "months": 200}},
        "embedding": {
            "pool": [{"variable": v, "lag": lag} for v in ("x", "y", "z") for lag in (0, -1, -2, -3)],
            "target": "x",
            "lead": 1,
            "dim": 3,
            "n_views": 10,
        },
        "test_span": {"last_months": 55},
        "seed": 3,
    }
    for section, values in overrides.items():
        if isinstance(values, dict) and isinstance(config.get(section), dict):
            config[section] = {**config[section], **values}
        else:
            config[section] = values
    return config


def _read_all(directory: str) -> dict:
    contents = {}
    for name in sorted(os.listdir(directory)):
        with open(os.path.join(directory, name), "rb") as f:
            contents[name] = f.read()
    return contents


def test_simulate_writes_panels_and_manifest(tmp_path, write_config):
    path = write_config(_config())
    out = str(tmp_path / "sim")
    assert main(["simulate", "--config", path, "--out", out]) == 0

    files = sorted(os.listdir(out))
    expected = [f"model_{i:02d}.csv" for i in range(1, 6)] + ["manifest.json", "real.csv", "summary.txt"]
    assert files == sorted(expected)
    manifest = json.loads((tmp_path / "sim" / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 3
    assert "output_dir" not in manifest["config"]
    assert len(manifest["family"]) == 5
    frame = pd.read_csv(os.path.join(out, "real.csv"))
    assert list(frame.columns) == ["time", "x", "y", "z"]
    assert len(frame) == 200


def test_simulate_model_runs_can_outlast_the_real_record(tmp_path, write_config):
    config = _config()
    config["data"]["surrogate"]["run_months"] = 260
    out = str(tmp_path / "long")
    assert main(["simulate", "--config", write_config(config), "--out", out]) == 0

    real = pd.read_csv(os.path.join(out, "real.csv"))
    run = pd.read_csv(os.path.join(out, "model_01.csv"))
    assert len(real) == 200
    assert len(run) == 260
    assert run["time"].iloc[0] == real["time"].iloc[0] == "1960-01"


def test_simulate_output_does_not_depend_on_threads(tmp_path, write_config):
    path = write_config(_config())
    one, many = str(tmp_path / "one"), str(tmp_path / "many")
    assert main(["simulate", "--config", path, "--out", one, "--threads", "1"]) == 0
    assert main(["simulate", "--config", path, "--out", many, "--threads", "3"]) == 0
    assert _read_all(one) == _read_all(many)


def test_schema_violation_exits_with_config_code(write_config, capsys):
    config = _config()
    config["data"]["surrogate"]["radius"] = -0.5
    assert main(["simulate", "--config", write_config(config)]) == 2
    assert "radius" in capsys.readouterr().err


def test_unknown_key_is_rejected(write_config, capsys):
    config = _config()
    config["embedding"]["lag_window"] = 4
    assert main(["validate", "--config", write_config(config)]) == 2
    assert "lag_window" in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    assert main(["validate", "--config", str(tmp_path / "absent.json")]) == 2
    assert "not found" in capsys.readouterr().err


def test_validate_accepts_a_good_config_and_flags_unknown_variables(write_config, capsys):
    assert main(["validate", "--config", write_config(_config())]) == 0
    assert capsys.readouterr().out.strip() == "config OK"

    config = _config()
    config["embedding"]["target"] = "w"
    assert main(["validate", "--config", write_config(config, "bad.json")]) == 2
    assert "w" in capsys.readouterr().err


def test_invalid_log_level(write_config):
    assert main(["validate", "--config", write_config(_config()), "--log-level", "LOUD"]) == 2


def test_predict_reports_the_correlation_of_its_output(tmp_path, write_config, capsys):
    out = str(tmp_path / "pred")
    assert main(["predict", "--config", write_config(_config()), "--out", out]) == 0
    printed = capsys.readouterr().out.strip()
    assert printed.startswith("predictive correlation: ")
    reported = float(printed.split(": ")[1])

    frame = pd.read_csv(os.path.join(out, "predictions.csv"))
    assert list(frame.columns) == ["time", "multiview_mean", "observed", "n_views_used"]
    assert len(frame) == 55
    recomputed = np.corrcoef(frame["multiview_mean"], frame["observed"])[0, 1]
    assert reported == pytest.approx(recomputed, abs=1e-8)

    ensemble = pd.read_csv(os.path.join(out, "ensemble.csv"))
    assert len(ensemble) == 55 * 10
    assert list(ensemble.columns) == ["time", "view_id", "single_nn", "local_linear"]


def test_predict_is_thread_independent(tmp_path, write_config):
    path = write_config(_config())
    one, many = str(tmp_path / "one"), str(tmp_path / "many")
    assert main(["predict", "--config", path, "--out", one, "--threads", "1"]) == 0
    assert main(["predict", "--config", path, "--out", many, "--threads", "4"]) == 0
    assert _read_all(one) == _read_all(many)


def test_predict_from_csv_panels(tmp_path, write_config):
    sim = str(tmp_path / "sim")
    assert main(["simulate", "--config", write_config(_config()), "--out", sim]) == 0
    config = _config()
    config["data"] = {"real": {"path": os.path.join(sim, "real.csv")}}
    out = str(tmp_path / "pred")
    assert main(["predict", "--config", write_config(config, "csv.json"), "--out", out]) == 0
    assert os.path.exists(os.path.join(out, "predictions.csv"))


def test_englobe_with_too_few_runs_is_a_data_error(write_config, tmp_path, capsys):
    config = _config(inference={"augmentation": False})
    config["data"]["surrogate"]["n_runs"] = 2
    assert main(["englobe", "--config", write_config(config), "--out", str(tmp_path / "e")]) == 3
    assert "at least 3 model runs" in capsys.readouterr().err


def test_bounds_need_enough_views(write_config, capsys):
    assert main(["bounds", "--config", write_config(_config())]) == 2
    assert "n_views" in capsys.readouterr().err


def test_compare_without_augmentation_finds_no_difference(tmp_path, write_config):
    out = str(tmp_path / "cmp")
    config = _config(inference={"augmentation": False})
    assert main(["compare", "--config", write_config(config), "--out", out]) == 0
    result = json.loads((tmp_path / "cmp" / "compare.json").read_text())
    assert result["p_value"] == 1.0
    assert result["direction"] == "no difference"
    assert result["projections"] == []


@pytest.mark.slow
def test_compare_with_projections(tmp_path, write_config):
    out = str(tmp_path / "cmp")
    assert main(["compare", "--config", write_config(_config()), "--out", out]) == 0
    result = json.loads((tmp_path / "cmp" / "compare.json").read_text())
    assert result["projections"] == [f"proj_{i:02d}" for i in range(1, 6)]
    assert 0.0 < result["p_value"] <= 1.0
    augmented = pd.read_csv(os.path.join(out, "predictions_augmented.csv"))
    assert len(augmented) == 55


@pytest.mark.slow
def test_englobe_rejects_a_reality_buried_in_heavy_noise(tmp_path, write_config):
    config = _config(inference={"augmentation": False})
    config["data"]["surrogate"].update({"months": 300, "obs_noise_sd": 5.0})
    config["embedding"]["n_views"] = 20
    out = str(tmp_path / "eng")
    assert main(["englobe", "--config", write_config(config), "--out", out]) == 0
    result = json.loads((tmp_path / "eng" / "englobe.json").read_text())
    assert result["n_sim_sim"] == 20
    assert result["n_sim_real"] == 5
    assert result["medians"]["sim_real"] < result["medians"]["sim_sim"]
    assert result["p_value"] < 0.01
    populations = pd.read_csv(os.path.join(out, "populations.csv"))
    assert set(populations["population"]) == {"sim_sim", "sim_real", "real_real"}


@pytest.mark.slow
def test_bounds_writes_bounds_diagnostics_and_densities(tmp_path, write_config):
    config = _config(
        inference={"ks_bootstrap": 19, "mixture_bootstrap": 9, "mixture_restarts": 2},
        test_span={"last_months": 20},
    )
    config["embedding"]["n_views"] = 40
    out = str(tmp_path / "bnd")
    assert main(["bounds", "--config", write_config(config), "--out", out]) == 0

    bounds = pd.read_csv(os.path.join(out, "bounds.csv"))
    assert list(bounds.columns) == ["time", "lo", "hi", "multiview_mean", "observed"]
    assert len(bounds) == 20
    assert (bounds["lo"] <= bounds["hi"]).all()
    diagnostics = pd.read_csv(os.path.join(out, "diagnostics.csv"))
    assert len(diagnostics) == 20
    assert diagnostics[["rep_p", "ks_p"]].apply(lambda c: c.between(0, 1).all()).all()
    mix_p = diagnostics["mix_p"].dropna()
    assert mix_p.between(0, 1).all()
    assert not diagnostics.loc[diagnostics["mix_p"].isna(), "mix_flag"].any()
    densities = [name for name in os.listdir(out) if name.startswith("density_")]
    assert 0 < len(densities) <= 20
