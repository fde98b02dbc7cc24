import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from brownsheet import DegenerateSpectrumError, GapPolicy, ValidationError, eigh
from brownsheet.errors import ConfigurationError
from brownsheet.spectral import (eig_grad, eig_grad_all, eig_hess, eig_hess_all, eig_third,
                                 eig_third_gapsum, fd_gradient, fd_hessian, grad_b,
                                 hoffman_wielandt_excess, identity_residuals,
                                 inverse_gap_laplacian, random_gapped_matrix, second_sum_b,
                                 third_derivative_sum, unit_perturbation, vector_identity)


@pytest.fixture
def matrix():
    return random_gapped_matrix(np.random.default_rng(7), 5, gap_min=0.5)


def _rel(a, b):
    return np.max(np.abs(a - b)) / np.max(np.abs(a))


def test_descending_order_and_sign_rule(matrix):
    dec = eigh(matrix)
    assert np.all(np.diff(dec.lam) < 0)
    assert np.allclose(dec.reconstruct(), matrix, atol=1e-10 * np.abs(matrix).max())
    assert np.allclose(dec.vectors.T @ dec.vectors, np.eye(5), atol=1e-12)
    for col in dec.vectors.T:
        assert col[np.argmax(np.abs(col))] > 0


def test_diagonal_example():
    dec = eigh(np.diag([1.0, 3.0, 2.0]))
    assert list(dec.lam) == [3.0, 2.0, 1.0]
    assert np.array_equal(dec.vectors, np.eye(3)[:, [1, 2, 0]])
    assert dec.gap_min == 1.0


def test_sign_tie_goes_to_lowest_row():
    # eigenvectors (1, 1)/sqrt2 and (1, -1)/sqrt2: first entry positive in both
    dec = eigh(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.all(dec.vectors[0] > 0)


def test_rejects_bad_input():
    with pytest.raises(ValidationError):
        eigh(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(ValidationError):
        eigh(np.ones((2, 3)))
    with pytest.raises(ValidationError):
        eigh(np.array([[np.nan]]))


def test_gradient_matches_finite_differences(matrix):
    dec = eigh(matrix)
    assert _rel(eig_grad_all(dec), fd_gradient(matrix, 1e-5)) < 1e-6


def test_gradient_closed_form_entries(matrix):
    dec = eigh(matrix)
    u = dec.vectors
    assert eig_grad(dec, 1, 2, 2) == pytest.approx(u[2, 1] ** 2)
    assert eig_grad(dec, 1, 0, 3) == pytest.approx(2 * u[0, 1] * u[3, 1])
    # the gradient of every eigenvalue sums to 1 over the diagonal coordinates
    rows, cols = np.triu_indices(5)
    assert np.allclose(eig_grad_all(dec)[:, rows == cols].sum(axis=1), 1.0)


def test_hessian_matches_finite_differences(matrix):
    dec = eigh(matrix)
    fd = fd_hessian(matrix, 1e-4)
    for i in range(5):
        assert _rel(eig_hess_all(dec, i), fd[i]) < 1e-4


def test_single_hessian_entry_agrees_with_table(matrix):
    dec = eigh(matrix)
    table = eig_hess_all(dec, 2)
    rows, cols = np.triu_indices(5)
    p = int(np.flatnonzero((rows == 0) & (cols == 3))[0])
    q = int(np.flatnonzero((rows == 1) & (cols == 1))[0])
    assert eig_hess(dec, 2, 0, 3, 1, 1) == pytest.approx(table[p, q], rel=1e-12)


def _fd_third(matrix, i, p1, p2, p3, h=1e-4):
    d = matrix.shape[0]
    e = unit_perturbation(d, *p3) * h
    plus = eig_hess(eigh(matrix + e), i, *p1, *p2)
    minus = eig_hess(eigh(matrix - e), i, *p1, *p2)
    return (plus - minus) / (2 * h)


@pytest.mark.parametrize("i,p1,p2,p3", [(0, (0, 1), (2, 3), (1, 4)), (2, (1, 1), (1, 2), (0, 0)),
                                        (4, (3, 4), (3, 4), (2, 2))])
def test_third_derivatives_agree(matrix, i, p1, p2, p3):
    dec = eigh(matrix)
    fd = _fd_third(matrix, i, p1, p2, p3)
    exact = eig_third(dec, i, p1, p2, p3)
    assert exact == pytest.approx(fd, rel=1e-5, abs=1e-9)
    if p1 == p2:
        assert eig_third_gapsum(dec, i, p3, p1) == pytest.approx(
            eig_third(dec, i, p3, p1, p1), rel=1e-10, abs=1e-14)


def test_summed_identities(matrix):
    report = identity_residuals(eigh(matrix))
    assert report.max() < 1e-8


def test_laplacian_two_by_two_closed_form():
    # X = diag(a, -a): lam_1 = a, second-order sum 2 / (2a)
    dec = eigh(np.diag([1.5, -1.5]))
    assert second_sum_b(dec, 0) == pytest.approx(2 / 3.0)
    assert inverse_gap_laplacian(dec, 0, 1) == pytest.approx(4 / 27.0)


def test_third_sum_forms_and_unknown_form(matrix):
    dec = eigh(matrix)
    a = third_derivative_sum(dec, 1, 0, 2)
    b = third_derivative_sum(dec, 1, 0, 2, form="vectors")
    assert a == pytest.approx(b, rel=1e-12)
    with pytest.raises(ConfigurationError):
        third_derivative_sum(dec, 1, 0, 2, form="other")


def test_b_coordinates_scale_diagonal():
    dec = eigh(np.diag([2.0, 0.0]))
    g = grad_b(dec)
    assert g[0, 0] == pytest.approx(np.sqrt(2))


def test_degenerate_spectrum_is_refused():
    dec = eigh(np.eye(3))
    with pytest.raises(DegenerateSpectrumError):
        eig_hess_all(dec, 0)
    with pytest.raises(DegenerateSpectrumError):
        eigh(np.diag([1.0, 1.0 + 1e-6])).require_simple(GapPolicy(1e-4))


def test_dimension_one_is_trivial():
    dec = eigh(np.array([[2.5]]))
    assert eig_grad_all(dec).tolist() == [[1.0]]
    assert eig_hess_all(dec, 0).tolist() == [[0.0]]
    assert second_sum_b(dec, 0) == 0.0
    assert identity_residuals(dec).max() == 0.0


@settings(max_examples=50, deadline=None)
@given(d=st.integers(2, 12), seed=st.integers(0, 2**31), cols=st.data())
def test_vector_identity_on_orthonormal_pairs(d, seed, cols):
    q, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((d, d)))
    a, b = cols.draw(st.lists(st.integers(0, d - 1), min_size=2, max_size=2, unique=True))
    cross, same = vector_identity(q[:, a], q[:, b])
    assert abs(cross - 2.0) < 1e-12
    assert abs(same - 2.0) < 1e-12


@settings(max_examples=50, deadline=None)
@given(d=st.integers(1, 10), seed=st.integers(0, 2**31), scale=st.floats(1e-3, 1e3))
def test_hoffman_wielandt_never_violated(d, seed, scale):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((d, d))
    b = rng.standard_normal((d, d)) * scale
    x, y = a + a.T, b + b.T
    assert hoffman_wielandt_excess(x, y) <= 1e-9 * (1 + np.sum((x - y) ** 2))
