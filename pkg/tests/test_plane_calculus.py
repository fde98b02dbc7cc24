import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from brownsheet import GridSpec, sample_sheet
from brownsheet.errors import AlignmentError, ConfigurationError, ValidationError
from brownsheet.plane_calculus import (GreenTestSpec, constant_family, drift_family,
                                       dual_refinement, green_formula_residual, green_terms,
                                       j_covariation_mc, j_integral, j_mm_identity_residual,
                                       j_second_moment_mc, refinement_csv, smooth_family,
                                       zero_family)
from brownsheet.sheet import sample_sheet_stack


def _product_field(n):
    s = np.linspace(0, 1, n + 1)
    return np.outer(s, s)


@pytest.mark.parametrize("n", [4, 16, 64])
def test_deterministic_product_field(n):
    # M = N = st: J(1,1) = int int s t ds dt = 1/4; the line form is exactly
    # q - q^2 with q = (n - 1) / (2n)
    m = _product_field(n)
    res = j_integral(m, m)
    q = (n - 1) / (2 * n)
    assert res.value_lineform == pytest.approx(q - q * q, rel=1e-12)
    assert abs(res.value_discrete - 0.25) < 1.0 / n


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 12), seed=st.integers(0, 2**32), r=st.integers(0, 50))
def test_lineform_minus_discrete_is_closure(n, seed, r):
    grid = GridSpec(1.0, 1.0, n, n, seed)
    stack = sample_sheet_stack(grid, (0, 1), r)
    res = j_integral(stack[0], stack[1])
    scale = 1.0 + np.abs(stack).sum()
    assert abs(res.sbp_residual) <= 1e-12 * scale


def test_axes_and_sub_points():
    grid = GridSpec(1.0, 1.0, 6, 6, seed=1)
    m, n = sample_sheet(grid, 0), sample_sheet(grid, 1)
    assert j_integral(m, n, (0, 4)).value_lineform == 0.0
    part = j_integral(m, n, (3, 2))
    sub = j_integral(m.values[:4, :3], n.values[:4, :3])
    assert part.value_lineform == sub.value_lineform
    with pytest.raises(IndexError):
        j_integral(m, n, (7, 1))
    with pytest.raises(ValidationError):
        j_integral(m.values, n.values[:, :3])


def test_jmm_identity():
    m = sample_sheet(GridSpec(1.0, 1.0, 16, 16, seed=4), 0)
    resid, scale = j_mm_identity_residual(m)
    assert abs(resid) <= 1e-12 * scale


def test_second_moment_small_run():
    grid = GridSpec(1.0, 1.0, 16, 16, seed=2)
    rows = j_second_moment_mc(grid, 2000, [(16, 16), (8, 16)])
    (p, mj, mj2, theory), (p2, _, mj2b, theory2) = rows
    assert theory == 0.25 and theory2 == pytest.approx(0.0625)
    assert mj.within(0.0) and mj2.within(theory, 5) and mj2b.within(theory2, 5)


def test_covariation_labels():
    grid = GridSpec(1.0, 1.0, 8, 8, seed=0)
    with pytest.warns(RuntimeWarning):
        res = j_covariation_mc(("M", "N", "P", "Q"), grid, 200)
    assert res.theory == 0.0 and res.max_sbp_residual < 1e-12
    with pytest.raises(ConfigurationError):
        j_covariation_mc(("M", "N"), grid, 1000)


def test_zero_family_is_an_exact_identity():
    spec = zero_family()
    grid = GridSpec(1.0, 1.0, 16, 16, seed=0)
    for r in range(5):
        terms = green_terms(spec, grid, sample_sheet_stack(grid, range(2), r))
        assert abs(terms.residual) <= 1e-12 * terms.scale


@pytest.mark.parametrize("family", [constant_family, drift_family, smooth_family])
def test_closure_accounts_for_the_residual_drift(family):
    # with left-point F, lhs - (area + J + mixed) equals the closure sum
    spec = family()
    grid = GridSpec(1.0, 1.0, 8, 8, seed=3)
    terms = green_terms(spec, grid, sample_sheet_stack(grid, range(spec.d), 1))
    assert terms.residual == pytest.approx(terms.closure, abs=1e-12 * terms.scale)


def test_green_refines_for_drift_family():
    table = green_formula_residual(drift_family(), [4, 32], 100, seed=5)
    assert table[1].rms < table[0].rms


def test_misaligned_rectangle():
    spec = GreenTestSpec("odd", 1, lambda j, i, s, t, m: np.zeros(s.shape),
                         lambda j, x: np.zeros_like(x), rectangle=(0.0, 0.3, 0.0, 1.0))
    with pytest.raises(AlignmentError):
        green_formula_residual(spec, [4], 2)
    with pytest.raises(ConfigurationError):
        GreenTestSpec("bad", 1, None, None, rectangle=(0.0, 2.0, 0.0, 1.0))
    with pytest.raises(ConfigurationError):
        GreenTestSpec("bad", 1, None, None, form="dx")


def test_sub_rectangle_and_levels():
    spec = GreenTestSpec("inner", 2, constant_family().coefficient,
                         lambda j, x: np.cos(x + j), rectangle=(0.25, 0.75, 0.5, 1.0))
    table = green_formula_residual(spec, [4, 8], 10)
    assert [row.n for row in table] == [4, 8]
    with pytest.raises(ConfigurationError):
        green_formula_residual(spec, [4, 6], 2)


def test_dual_refinement_and_csv():
    dual = dual_refinement([4, 16], 50, seed=1)
    assert dual[1].rms < dual[0].rms
    green = green_formula_residual(drift_family(), [4, 16], 5)
    text = refinement_csv(green, dual)
    lines = text.splitlines()
    assert lines[0] == "level,n,rms_green,rms_dual,se"
    assert lines[1].startswith("0,4,")
    assert "nan" in refinement_csv(None, dual)
