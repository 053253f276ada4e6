# SPDX-License-Identifier: GPL-3.0-only

import math

import numpy as np
import pytest

from conftest import make_panel
from embedding import (
    Coordinate,
    View,
    build_delay_matrix,
    query_vectors,
    sample_views,
    split_by_origin,
    split_views,
)
from exceptions import DataError


def _ramp_panel(n: int = 100):
    t = np.arange(n, dtype=np.float64)
    return make_panel({"temp": t, "mei": 1000.0 + t})


def test_offsets_map_to_lags_from_issue_time():
    coord = Coordinate.from_offset("temp", -24, lead=18)
    assert coord.lag == -6
    assert coord.offset(18) == -24
    assert Coordinate.from_offset("temp", -18, lead=18).lag == 0
    with pytest.raises(DataError, match="less than 18 months"):
        Coordinate.from_offset("temp", -12, lead=18)


def test_coordinate_lag_must_be_non_positive():
    with pytest.raises(DataError):
        Coordinate("temp", 1)


def test_view_validation():
    with pytest.raises(DataError, match="distinct"):
        View((Coordinate("a", 0), Coordinate("a", 0)), "a", 1)
    with pytest.raises(DataError, match="Lead"):
        View((Coordinate("a", 0),), "a", 0)
    with pytest.raises(DataError):
        View((), "a", 1)


def test_worked_lag_example_row_count_and_values():
    panel = _ramp_panel(100)
    coords = tuple(Coordinate.from_offset("temp", offset, 18) for offset in range(-18, -27, -1))
    view = View(coords, "mei", 18)
    assert view.depth == 26
    assert view.offsets() == list(range(-18, -27, -1))

    matrix = build_delay_matrix(panel, view)
    assert len(matrix) == 100 - 26
    first = int(matrix.times[0]) - panel.start
    assert first == 26
    np.testing.assert_array_equal(matrix.X[0], np.arange(8, -1, -1, dtype=np.float64))
    assert matrix.Y[0] == 1000.0 + 26


def test_two_offset_view_reads_the_right_months():
    panel = _ramp_panel(60)
    view = View(
        (Coordinate.from_offset("temp", -18, 18), Coordinate.from_offset("temp", -24, 18)),
        "temp",
        18,
    )
    matrix = build_delay_matrix(panel, view)
    rows = matrix.times - panel.start
    np.testing.assert_array_equal(matrix.X[:, 0], rows - 18)
    np.testing.assert_array_equal(matrix.X[:, 1], rows - 24)
    np.testing.assert_array_equal(matrix.Y, rows)
    np.testing.assert_array_equal(matrix.coordinate_times()[:, 1], matrix.times - 24)


def test_missing_cell_drops_only_rows_that_use_it():
    values = np.arange(20, dtype=np.float64)
    values[10] = np.nan
    panel = make_panel({"a": values})
    view = View((Coordinate("a", 0),), "a", 1)
    matrix = build_delay_matrix(panel, view)
    assert len(matrix) == 19 - 2
    rows = matrix.times - panel.start
    assert 10 not in rows and 11 not in rows


def test_empty_delay_matrix_is_an_error():
    panel = _ramp_panel(10)
    view = View((Coordinate("temp", -9),), "temp", 1)
    with pytest.raises(DataError, match="empty delay matrix"):
        build_delay_matrix(panel, view)


def test_unknown_variable_is_an_error():
    with pytest.raises(DataError, match="Unknown variable"):
        build_delay_matrix(_ramp_panel(), View((Coordinate("rain", 0),), "temp", 1))


def test_query_vectors_pad_outside_the_panel():
    panel = _ramp_panel(10)
    view = View((Coordinate("temp", 0), Coordinate("temp", -1)), "temp", 2)
    X = query_vectors(panel, view, [panel.end + 2, panel.end + 5])
    np.testing.assert_array_equal(X[0], [9.0, 8.0])
    assert np.isnan(X[1]).all()


def test_sample_views_is_deterministic_and_distinct():
    pool = [Coordinate(v, lag) for v in ("a", "b") for lag in range(0, -5, -1)]
    first = sample_views(pool, "a", 3, 3, 50, seed=11)
    second = sample_views(pool, "a", 3, 3, 50, seed=11)
    assert first == second
    assert len({view.coords for view in first}) == 50
    assert all(view.dim == 3 and view.lead == 3 for view in first)
    assert sample_views(pool, "a", 3, 3, 50, seed=12) != first


def test_sample_views_reports_the_combinatorial_limit():
    pool = [Coordinate("a", lag) for lag in range(0, -5, -1)]
    total = math.comb(5, 3)
    with pytest.raises(DataError, match=f"Requested 11 views but only {total}"):
        sample_views(pool, "a", 1, 3, 11, seed=0)
    assert len(sample_views(pool, "a", 1, 3, total, seed=0)) == total


def test_split_views_are_disjoint():
    pool = [Coordinate(v, lag) for v in ("a", "b", "c") for lag in range(0, -4, -1)]
    left, right = split_views(pool, "a", 1, 3, 30, seed=5)
    assert len(left) == len(right) == 30
    assert not {v.coords for v in left} & {v.coords for v in right}


def test_split_by_origin_respects_the_boundary():
    panel = _ramp_panel(50)
    view = View((Coordinate("temp", 0), Coordinate("temp", -2)), "temp", 3)
    matrix = build_delay_matrix(panel, view)
    origin = panel.start + 30
    train, test = split_by_origin(matrix, origin)
    assert train.times.max() <= origin
    assert train.coordinate_times().max() <= origin
    assert test.times.min() > origin
    assert len(train) + len(test) == len(matrix)
    with pytest.raises(DataError, match="Empty test"):
        split_by_origin(matrix, panel.end)


def test_delay_matrix_frame_layout():
    matrix = build_delay_matrix(_ramp_panel(10), View((Coordinate("temp", 0),), "temp", 1))
    frame = matrix.to_frame()
    assert list(frame.columns) == ["target_time", "x1", "y"]
    assert frame["target_time"].iloc[0] == "1960-02"


def test_delay_matrix_is_equivariant_under_time_shifts():
    panel = _ramp_panel(60)
    view = View((Coordinate("temp", 0), Coordinate("mei", -2), Coordinate("temp", -5)), "mei", 3)
    plain = build_delay_matrix(panel, view)
    moved = build_delay_matrix(panel.shift(37), view)
    np.testing.assert_array_equal(moved.times, plain.times + 37)
    np.testing.assert_array_equal(moved.X, plain.X)
    np.testing.assert_array_equal(moved.Y, plain.Y)
