import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from brownsheet import (ConfigurationError, GridSpec, ValidationError, build_matrix_field,
                        sample_sheet)
from brownsheet.errors import DegenerateSpectrumError
from brownsheet.matrix_field import check_distinct, pair_index, upper_pairs


@given(st.integers(1, 30))
def test_pair_index_enumerates_upper_triangle(d):
    pairs = upper_pairs(d)
    assert [pair_index(k, h, d) for k, h in pairs] == list(range(d * (d + 1) // 2))


def test_entries_are_sheets_with_diagonal_scaling():
    grid = GridSpec(1.0, 1.0, 2, 2, seed=4)
    field = build_matrix_field(3, grid, replica=1, stream_base=10)
    m = field.matrix_at(2, 2)
    assert np.array_equal(m, m.T)
    b01 = sample_sheet(grid, 10 + pair_index(0, 1, 3), replica=1).at(2, 2)
    b11 = sample_sheet(grid, 10 + pair_index(1, 1, 3), replica=1).at(2, 2)
    assert m[0, 1] == b01
    assert math.isclose(m[1, 1], math.sqrt(2) * b11, rel_tol=1e-15)


def test_goe_variances():
    grid = GridSpec(1.0, 1.0, 1, 1, seed=8)
    mats = np.array([build_matrix_field(2, grid, replica=r).matrix_at(1, 1)
                     for r in range(4000)])
    diag, off = mats[:, 0, 0], mats[:, 0, 1]
    se_d = np.sqrt(2.0 * 2.0**2 / diag.size)
    se_o = np.sqrt(2.0 / off.size)
    assert abs(diag.var() - 2.0) < 4 * se_d
    assert abs(off.var() - 1.0) < 4 * se_o


def test_initial_matrix_and_axes():
    grid = GridSpec(1.0, 1.0, 3, 3)
    init = np.diag([1.0, -2.0])
    field = build_matrix_field(2, grid, init)
    assert np.array_equal(field.matrix_at(0, 2), init)
    assert np.allclose(field.rescaled_matrix_at(0, 0), init / math.sqrt(2))


def test_initial_must_be_symmetric():
    grid = GridSpec(1.0, 1.0, 1, 1)
    with pytest.raises(ValidationError):
        build_matrix_field(2, grid, np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(ValidationError):
        build_matrix_field(2, grid, np.zeros((3, 3)))
    with pytest.raises(ConfigurationError):
        build_matrix_field(0, grid)


def test_coarsen_keeps_values():
    field = build_matrix_field(3, GridSpec(1.0, 1.0, 4, 4), replica=2)
    coarse = field.coarsen(2, 2)
    assert np.array_equal(coarse.matrix_at(1, 2), field.matrix_at(2, 4))


def test_sheet_accessor_is_symmetric_in_pair():
    field = build_matrix_field(3, GridSpec(1.0, 1.0, 2, 2))
    assert np.array_equal(field.sheet(2, 0).values, field.sheet(0, 2).values)


def test_check_distinct():
    assert check_distinct(np.diag([0.0, 1.0, 3.0]), 0.5) == 1.0
    with pytest.raises(DegenerateSpectrumError):
        check_distinct(np.diag([0.0, 1.0, 1.0]), 1e-8)
