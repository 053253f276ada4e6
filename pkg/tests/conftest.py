# SPDX-License-Identifier: GPL-3.0-only

import json

import numpy as np
import pytest

from embedding import Coordinate
from predictor import PredictionSet
from surrogate import DynamicsParams, integrate
from timeseries import SeriesPanel, month_index


def make_panel(values: dict, start: str = "1960-01", name: str = "panel") -> SeriesPanel:
    variables = list(values)
    columns = np.column_stack([np.asarray(values[v], dtype=np.float64) for v in variables])
    times = month_index(start) + np.arange(len(columns))
    return SeriesPanel(variables, times, columns, name)


def make_predictions(times, mean, observed, ensemble=None) -> PredictionSet:
    times = np.asarray(times, dtype=np.int64)
    mean = np.asarray(mean, dtype=np.float64)
    if ensemble is None:
        ensemble = mean[:, None].copy()
    ensemble = np.asarray(ensemble, dtype=np.float64)
    return PredictionSet(times, mean, ensemble, ensemble.copy(), np.asarray(observed, dtype=np.float64))


def lorenz_pool(lags=(0, -1, -2, -3)):
    return [Coordinate(v, lag) for v in ("x", "y", "z") for lag in lags]


@pytest.fixture(scope="session")
def lorenz_panel() -> SeriesPanel:
    params = DynamicsParams.for_months(560)
    return integrate(params, x0=[1.0, 1.0, 1.0], name="lorenz")


@pytest.fixture
def sine_panel() -> SeriesPanel:
    t = np.arange(200)
    return make_panel({"a": np.sin(0.3 * t), "b": np.cos(0.17 * t) + 0.1 * t / 200})


@pytest.fixture
def write_config(tmp_path):
    """Write a JSON run configuration into the test's temp dir."""

    def _write(config: dict, name: str = "config.json") -> str:
        path = tmp_path / name
        path.write_text(json.dumps(config), encoding="utf-8")
        return str(path)

    return _write
