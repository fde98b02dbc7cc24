import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from brownsheet import ConfigurationError, GridSpec, SheetField, sample_sheet, vertical_slice
from brownsheet.sheet import (horizontal_slice, sample_sheet_stack, sheet_to_csv,
                              stream_generator)


def test_vanishes_on_axes():
    sheet = sample_sheet(GridSpec(2.0, 3.0, 8, 12, seed=5), stream_id=0)
    assert np.all(sheet.values[0, :] == 0.0)
    assert np.all(sheet.values[:, 0] == 0.0)


def test_same_stream_is_reproducible_and_streams_differ():
    grid = GridSpec(1.0, 1.0, 6, 6, seed=11)
    a = sample_sheet(grid, 3, replica=2).values
    assert np.array_equal(a, sample_sheet(grid, 3, replica=2).values)
    assert not np.array_equal(a, sample_sheet(grid, 4, replica=2).values)
    assert not np.array_equal(a, sample_sheet(grid, 3, replica=1).values)


def test_stack_matches_individual_sheets():
    grid = GridSpec(1.0, 2.0, 5, 7, seed=3)
    stack = sample_sheet_stack(grid, [9, 2, 40], replica=6)
    for p, sid in enumerate([9, 2, 40]):
        assert np.array_equal(stack[p], sample_sheet(grid, sid, replica=6).values)


def test_stream_generator_counter_layout():
    a = stream_generator(0, 1).standard_normal(4)
    b = stream_generator(0, 1).standard_normal(4)
    assert np.array_equal(a, b)
    with pytest.raises(ConfigurationError):
        stream_generator(0, -1)


def test_covariance_matches_min_product():
    # Cov(B(z1), B(z2)) = (s1 ^ s2)(t1 ^ t2); four SE tolerance over 4000 sheets
    grid = GridSpec(1.0, 1.0, 4, 4, seed=1)
    stack = sample_sheet_stack(grid, range(4000))
    z1 = stack[:, 2, 4]   # (0.5, 1.0)
    z2 = stack[:, 4, 1]   # (1.0, 0.25)
    prod = z1 * z2
    target = 0.5 * 0.25
    se = prod.std(ddof=1) / math.sqrt(prod.size)
    assert abs(prod.mean() - target) < 4 * se
    var = stack[:, 4, 4] ** 2
    assert abs(var.mean() - 1.0) < 4 * var.std(ddof=1) / math.sqrt(var.size)


def test_rectangle_increments_are_independent_cells():
    grid = GridSpec(1.0, 1.0, 3, 3, seed=2)
    cells = np.stack([sample_sheet(grid, 0, r).cell_increments() for r in range(3000)])
    flat = cells.reshape(len(cells), -1)
    corr = np.corrcoef(flat.T)
    off = corr[~np.eye(9, dtype=bool)]
    assert np.max(np.abs(off)) < 0.1
    assert abs(flat.var() - grid.ds * grid.dt) < 0.1 * grid.ds * grid.dt


@settings(max_examples=25, deadline=None)
@given(n_s=st.integers(1, 6), n_t=st.integers(1, 6), seed=st.integers(0, 2**32))
def test_cell_increments_telescope(n_s, n_t, seed):
    sheet = sample_sheet(GridSpec(1.0, 1.0, n_s, n_t, seed), 0)
    assert math.isclose(sheet.cell_increments().sum(), sheet.values[-1, -1],
                        rel_tol=1e-12, abs_tol=1e-12)


def test_coarsen_restricts_without_resampling():
    sheet = sample_sheet(GridSpec(1.0, 1.0, 8, 4, seed=0), 0)
    coarse = sheet.coarsen(4, 2)
    assert coarse.grid.shape == (3, 3)
    assert coarse.at(1, 1) == sheet.at(4, 2)
    with pytest.raises(ConfigurationError):
        sheet.coarsen(3, 1)


def test_transpose_swaps_axes():
    sheet = sample_sheet(GridSpec(2.0, 1.0, 4, 2, seed=0), 0)
    tr = sheet.transposed()
    assert tr.grid.s_max == 1.0 and tr.at(1, 3) == sheet.at(3, 1)


def test_slices_and_bounds():
    sheet = sample_sheet(GridSpec(1.0, 1.0, 3, 5), 0)
    assert np.array_equal(vertical_slice(sheet, 2), sheet.values[2])
    assert np.array_equal(horizontal_slice(sheet, 4), sheet.values[:, 4])
    with pytest.raises(IndexError):
        vertical_slice(sheet, 4)
    with pytest.raises(IndexError):
        sheet.at(0, 6)


@pytest.mark.parametrize("args", [(0.0, 1.0, 2, 2), (1.0, 1.0, 0, 2), (1.0, math.inf, 2, 2),
                                  (1.0, 1.0, 2.5, 2)])
def test_invalid_grids(args):
    with pytest.raises(ConfigurationError):
        GridSpec(*args)


def test_index_of_rejects_off_grid_points():
    grid = GridSpec(1.0, 1.0, 4, 4)
    assert grid.index_of(0.5, 0.75) == (2, 3)
    with pytest.raises(ConfigurationError):
        grid.index_of(0.3, 0.5)


def test_values_are_read_only():
    sheet = SheetField.zeros(GridSpec(1.0, 1.0, 2, 2))
    with pytest.raises(ValueError):
        sheet.values[1, 1] = 1.0


def test_csv_layout(tmp_path):
    sheet = sample_sheet(GridSpec(1.0, 1.0, 1, 2), 0)
    path = tmp_path / "sheet.csv"
    text = sheet_to_csv(sheet, path)
    lines = text.splitlines()
    assert lines[0] == "s,t,value"
    assert len(lines) == 1 + 2 * 3
    assert lines[1].startswith("0,0,")
    assert lines[2].startswith("1,0,")
    s, t, v = lines[-1].split(",")
    assert float(v) == sheet.at(1, 2)
    assert path.read_text() == text
