"""Symmetric eigendecomposition and analytic eigenvalue derivatives.

Coordinates
-----------
Two coordinate systems are used for the upper triangle of a symmetric
matrix.  *Matrix coordinates* ``X_kh`` (``k <= h``) move both mirrored
entries when ``k != h``.  *Sheet coordinates* ``b_kh`` satisfy
``X_kh = b_kh`` off the diagonal and ``X_kk = sqrt(2) * b_kk``.  Every
``*_b`` function converts from matrix coordinates by multiplying with
``sqrt(2)`` once per diagonal index; no other function applies that factor.

All indices are zero based and eigenvalues are sorted in decreasing order.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DegenerateSpectrumError, ValidationError

__all__ = [
    "GapPolicy",
    "SpectralDecomposition",
    "eigh",
    "eig_grad",
    "eig_grad_all",
    "eig_hess",
    "eig_hess_all",
    "eig_third",
    "eig_third_gapsum",
    "coord_factor",
    "grad_b",
    "hess_b",
    "third_b",
    "second_sum_b",
    "third_derivative_sum",
    "third_derivative_sum_assembled",
    "inverse_gap_laplacian",
    "inverse_gap_laplacian_assembled",
    "identity_residuals",
    "IdentityReport",
    "vector_identity",
    "hoffman_wielandt_excess",
    "unit_perturbation",
    "fd_gradient",
    "fd_hessian",
    "random_gapped_matrix",
]

SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class GapPolicy:
    """Smallest admissible consecutive gap for derivative formulas."""

    epsilon: float = 1e-8

    def __post_init__(self):
        if not (self.epsilon > 0 and np.isfinite(self.epsilon)):
            raise ConfigurationError(f"gap epsilon must be positive, got {self.epsilon}")

    def admits(self, lam) -> bool:
        lam = np.asarray(lam, dtype=float)
        return lam.size < 2 or bool(np.min(lam[:-1] - lam[1:]) > self.epsilon)


DEFAULT_POLICY = GapPolicy()


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    lam: np.ndarray
    vectors: np.ndarray = field(repr=False)
    gap_min: float

    @property
    def d(self) -> int:
        return self.lam.size

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.lam) @ self.vectors.T

    def require_simple(self, policy: GapPolicy = DEFAULT_POLICY) -> None:
        if self.d > 1 and not self.gap_min > policy.epsilon:
            raise DegenerateSpectrumError(
                f"spectral gap {self.gap_min:.3g} not above {policy.epsilon:.3g}")

    def inverse_gaps(self) -> np.ndarray:
        """Matrix with entries ``1/(lam_i - lam_j)`` off the diagonal and 0 on it."""
        diff = self.lam[:, None] - self.lam[None, :]
        np.fill_diagonal(diff, np.inf)
        return 1.0 / diff


def eigh(matrix) -> SpectralDecomposition:
    """Eigendecomposition with descending eigenvalues and a fixed sign rule.

    Each eigenvector is flipped so that its largest-magnitude entry is
    positive; ties go to the lowest row index.
    """
    a = np.array(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError("matrix has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    asym = float(np.max(np.abs(a - a.T))) if a.size else 0.0
    if asym > 1e-12 * scale:
        raise ValidationError(f"matrix is not symmetric (max asymmetry {asym:.3g})")
    a = 0.5 * (a + a.T)
    w, v = np.linalg.eigh(a)
    lam = w[::-1].copy()
    vecs = v[:, ::-1].copy()
    mags = np.abs(vecs)
    # argmax returns the first (lowest row) maximizer
    rows = np.argmax(mags >= mags.max(axis=0) * (1 - 1e-14), axis=0)
    signs = np.sign(vecs[rows, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    vecs *= signs
    gap = float(np.min(lam[:-1] - lam[1:])) if lam.size > 1 else np.inf
    lam.setflags(write=False)
    vecs.setflags(write=False)
    return SpectralDecomposition(lam, vecs, gap)


def _pairs(d: int):
    return np.triu_indices(d)


def _check_pair(d, k, h):
    if not (0 <= k <= h < d):
        raise IndexError(f"coordinate ({k}, {h}) invalid for dimension {d}")


def _projected(dec: SpectralDecomposition, k: int, h: int) -> np.ndarray:
    """``U^T E_kh U`` for the unit perturbation of matrix coordinate ``(k, h)``."""
    u = dec.vectors
    outer = np.outer(u[k], u[h])
    return outer + outer.T if k != h else outer


def eig_grad(dec: SpectralDecomposition, i: int, k: int, h: int) -> float:
    """First derivative of ``lam_i`` in matrix coordinate ``X_kh``."""
    _check_pair(dec.d, k, h)
    u = dec.vectors
    return float(2 * u[k, i] * u[h, i] if k != h else u[k, i] ** 2)


def eig_grad_all(dec: SpectralDecomposition) -> np.ndarray:
    """Array ``g[i, p]`` of first derivatives over the upper pairs ``p``."""
    rows, cols = _pairs(dec.d)
    u = dec.vectors
    g = u[rows, :] * u[cols, :]
    g[rows != cols] *= 2.0
    return g.T.copy()


def _coupling(dec: SpectralDecomposition, i: int) -> np.ndarray:
    """``C[p, j] = w_p (U_ki U_hj + U_hi U_kj)`` for pairs ``p = (k, h)``."""
    rows, cols = _pairs(dec.d)
    u = dec.vectors
    c = u[rows, i][:, None] * u[cols, :] + u[cols, i][:, None] * u[rows, :]
    c[rows == cols] *= 0.5
    return c


def eig_hess_all(dec: SpectralDecomposition, i: int,
                 policy: GapPolicy = DEFAULT_POLICY) -> np.ndarray:
    """Hessian of ``lam_i`` over the upper pairs, in matrix coordinates."""
    dec.require_simple(policy)
    c = _coupling(dec, i)
    inv = dec.inverse_gaps()[i]
    return 2.0 * (c * inv) @ c.T


def eig_hess(dec: SpectralDecomposition, i: int, k: int, h: int, k2: int, h2: int,
             policy: GapPolicy = DEFAULT_POLICY) -> float:
    """Mixed second derivative of ``lam_i`` in ``X_kh`` and ``X_k2h2``."""
    _check_pair(dec.d, k, h)
    _check_pair(dec.d, k2, h2)
    dec.require_simple(policy)
    a = _projected(dec, k, h)[i]
    b = _projected(dec, k2, h2)[i]
    return float(2.0 * np.sum(a * b * dec.inverse_gaps()[i]))


def eig_third(dec: SpectralDecomposition, i: int, p1, p2, p3,
              policy: GapPolicy = DEFAULT_POLICY) -> float:
    """Mixed third derivative of ``lam_i`` in three matrix coordinates.

    Symmetrized third-order perturbation expansion; each ``p`` is a
    ``(k, h)`` pair.
    """
    dec.require_simple(policy)
    mats = [_projected(dec, *p) for p in (p1, p2, p3)]
    inv = dec.inverse_gaps()[i]
    total = 0.0
    for a, b, c in ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)):
        pa, pb, pc = mats[a], mats[b], mats[c]
        total += (pa[i] * inv) @ pb @ (pc[:, i] * inv)
        total -= pa[i, i] * np.sum(pb[i] * pc[:, i] * inv**2)
    return float(total)


def eig_third_gapsum(dec: SpectralDecomposition, i: int, theta, xi,
                    policy: GapPolicy = DEFAULT_POLICY) -> float:
    """``d^3 lam_i / d xi^2 d theta`` for linear coordinates via the first-order-term formula.

    Only terms built from first derivatives of the matrix survive because
    the matrix is linear in its coordinates.
    """
    dec.require_simple(policy)
    pa = _projected(dec, *theta)
    pb = _projected(dec, *xi)
    inv = dec.inverse_gaps()
    lam = dec.lam
    d = dec.d
    total = 0.0
    for j in range(d):
        if j == i:
            continue
        r = inv[i, j]
        s1 = np.sum(pb[i] * pa[:, j] * inv[i]) * pb[i, j]
        s2 = np.sum(pb[i] * pb[:, j] * inv[i]) * pa[i, j]
        s3 = np.sum(pa[i] * pb[:, j] * inv[j]) * pb[i, j]
        s4 = np.sum(pb[i] * pb[:, j] * inv[j]) * pa[i, j]
        last = pa[i, j] * pb[i, j] * (pb[i, i] - pb[j, j]) / (lam[i] - lam[j]) ** 2
        total += 2.0 * ((s1 + s2 + s3 + s4) * r - last)
    return float(total)


def coord_factor(k: int, h: int) -> float:
    """Chain-rule factor ``dX_kh / db_kh``."""
    return SQRT2 if k == h else 1.0


def grad_b(dec: SpectralDecomposition) -> np.ndarray:
    """First derivatives ``g[i, p]`` in sheet coordinates."""
    rows, cols = _pairs(dec.d)
    return eig_grad_all(dec) * np.where(rows == cols, SQRT2, 1.0)


def hess_b(dec: SpectralDecomposition, i: int,
           policy: GapPolicy = DEFAULT_POLICY) -> np.ndarray:
    rows, cols = _pairs(dec.d)
    f = np.where(rows == cols, SQRT2, 1.0)
    return eig_hess_all(dec, i, policy) * np.outer(f, f)


def third_b(dec: SpectralDecomposition, i: int, p1, p2, p3,
            policy: GapPolicy = DEFAULT_POLICY) -> float:
    f = coord_factor(*p1) * coord_factor(*p2) * coord_factor(*p3)
    return f * eig_third(dec, i, p1, p2, p3, policy)


def second_sum_b(dec: SpectralDecomposition, i: int,
                 policy: GapPolicy = DEFAULT_POLICY) -> float:
    """Closed form of the sheet-coordinate Laplacian of ``lam_i``: ``2 sum_j 1/(lam_i - lam_j)``."""
    dec.require_simple(policy)
    return float(2.0 * np.sum(dec.inverse_gaps()[i]))


def third_derivative_sum(dec: SpectralDecomposition, i: int, k: int, h: int,
                         policy: GapPolicy = DEFAULT_POLICY, form: str = "gradient") -> float:
    """Derivative in ``b_kh`` of the sheet-coordinate Laplacian of ``lam_i``.

    ``form="gradient"`` uses first derivatives of the other eigenvalues,
    ``form="vectors"`` writes them out in eigenvector entries.  The two are
    algebraically equal.
    """
    _check_pair(dec.d, k, h)
    dec.require_simple(policy)
    inv2 = dec.inverse_gaps()[i] ** 2
    u = dec.vectors
    if form == "vectors":
        weight = 2.0 if k != h else SQRT2
        return float(2.0 * weight * np.sum((u[k] * u[h] - u[k, i] * u[h, i]) * inv2))
    if form != "gradient":
        raise ConfigurationError(f"unknown form {form!r}")
    g = grad_b(dec)[:, _pair_pos(dec.d, k, h)]
    return float(2.0 * np.sum((g - g[i]) * inv2))


def _pair_pos(d, k, h):
    return k * d - k * (k - 1) // 2 + (h - k)


def third_derivative_sum_assembled(dec: SpectralDecomposition, i: int, k: int, h: int,
                                   policy: GapPolicy = DEFAULT_POLICY) -> float:
    """The same quantity summed term by term from third derivatives."""
    rows, cols = _pairs(dec.d)
    return sum(third_b(dec, i, (k, h), (a, b), (a, b), policy)
               for a, b in zip(rows.tolist(), cols.tolist()))


def inverse_gap_laplacian(dec: SpectralDecomposition, i: int, j: int,
                          policy: GapPolicy = DEFAULT_POLICY) -> float:
    """Closed form of the sheet-coordinate Laplacian of ``1/(lam_i - lam_j)``."""
    if i == j:
        raise ConfigurationError("indices must differ")
    dec.require_simple(policy)
    lam = dec.lam
    gap = lam[i] - lam[j]
    others = [l for l in range(dec.d) if l not in (i, j)]
    tail = sum(2.0 / ((lam[i] - lam[l]) * (lam[j] - lam[l])) for l in others)
    return float(4.0 / gap**3 + tail / gap)


def inverse_gap_laplacian_assembled(dec: SpectralDecomposition, i: int, j: int,
                                    policy: GapPolicy = DEFAULT_POLICY) -> float:
    """The same quantity assembled from gradients and Hessian diagonals."""
    g = grad_b(dec)
    dg = g[i] - g[j]
    lap = np.trace(hess_b(dec, i, policy)) - np.trace(hess_b(dec, j, policy))
    psi = 1.0 / (dec.lam[i] - dec.lam[j])
    return float(np.sum(2 * psi**3 * dg**2) - psi**2 * lap)


@dataclass(frozen=True)
class IdentityReport:
    laplacian: float
    third_sum: float
    third_forms: float
    inverse_gap: float

    def max(self) -> float:
        return max(self.laplacian, self.third_sum, self.third_forms, self.inverse_gap)


def identity_residuals(dec: SpectralDecomposition,
                       policy: GapPolicy = DEFAULT_POLICY) -> IdentityReport:
    """Largest absolute residuals of the summed derivative identities.

    ``laplacian``: Hessian trace against ``2 sum 1/(lam_i - lam_j)``.
    ``third_sum``: summed third derivatives against the gradient form.
    ``third_forms``: gradient form against eigenvector form.
    ``inverse_gap``: Laplacian of ``1/(lam_i - lam_j)`` against its closed form.
    """
    dec.require_simple(policy)
    d = dec.d
    lap = third = forms = inv = 0.0
    rows, cols = _pairs(d)
    for i in range(d):
        lap = max(lap, abs(np.trace(hess_b(dec, i, policy)) - second_sum_b(dec, i, policy)))
        for k, h in zip(rows.tolist(), cols.tolist()):
            closed = third_derivative_sum(dec, i, k, h, policy)
            third = max(third, abs(third_derivative_sum_assembled(dec, i, k, h, policy) - closed))
            forms = max(forms, abs(third_derivative_sum(dec, i, k, h, policy, "vectors") - closed))
        for j in range(d):
            if j != i:
                inv = max(inv, abs(inverse_gap_laplacian_assembled(dec, i, j, policy)
                                   - inverse_gap_laplacian(dec, i, j, policy)))
    return IdentityReport(float(lap), float(third), float(forms), float(inv))


def vector_identity(a, b) -> tuple[float, float]:
    """``sum (a_i b_j + a_j b_i)^2`` and ``sum (a_i a_j + b_i b_j)^2``; both equal 2 for orthonormal ``a, b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cross = np.outer(a, b)
    same = np.outer(a, a) + np.outer(b, b)
    return float(np.sum((cross + cross.T) ** 2)), float(np.sum(same**2))


def hoffman_wielandt_excess(first, second) -> float:
    """``sum |lam_i(X) - lam_i(Y)|^2 - ||X - Y||_F^2``; never positive beyond roundoff."""
    x = np.asarray(first, dtype=float)
    y = np.asarray(second, dtype=float)
    lx = np.linalg.eigvalsh(x)
    ly = np.linalg.eigvalsh(y)
    diff = x - y
    return float(np.sum((lx - ly) ** 2) - np.sum(diff**2))


def unit_perturbation(d: int, k: int, h: int) -> np.ndarray:
    """Direction of matrix coordinate ``X_kh``: both mirrored entries move when ``k != h``."""
    e = np.zeros((d, d))
    e[k, h] = e[h, k] = 1.0
    return e


def fd_gradient(matrix, step: float = 1e-5) -> np.ndarray:
    """Central differences of all eigenvalues, ``g[i, p]`` over upper pairs."""
    x = np.asarray(matrix, dtype=float)
    d = x.shape[0]
    rows, cols = _pairs(d)
    out = np.empty((d, rows.size))
    for p, (k, h) in enumerate(zip(rows, cols)):
        e = unit_perturbation(d, k, h) * step
        out[:, p] = (eigh(x + e).lam - eigh(x - e).lam) / (2 * step)
    return out


def fd_hessian(matrix, step: float = 1e-4) -> np.ndarray:
    """Mixed central differences of all eigenvalues, ``H[i, p, q]``."""
    x = np.asarray(matrix, dtype=float)
    d = x.shape[0]
    rows, cols = _pairs(d)
    dirs = [unit_perturbation(d, k, h) * step for k, h in zip(rows, cols)]
    n = len(dirs)
    out = np.empty((d, n, n))
    for p in range(n):
        for q in range(p, n):
            a, b = dirs[p], dirs[q]
            val = (eigh(x + a + b).lam - eigh(x + a - b).lam
                   - eigh(x - a + b).lam + eigh(x - a - b).lam) / (4 * step * step)
            out[:, p, q] = out[:, q, p] = val
    return out


def random_gapped_matrix(rng: np.random.Generator, d: int, gap_min: float,
                         max_tries: int = 10_000) -> np.ndarray:
    """Symmetric Gaussian matrix, scaled by ``d``, whose eigenvalue gaps all exceed ``gap_min``."""
    for _ in range(max_tries):
        a = rng.standard_normal((d, d)) * d
        x = 0.5 * (a + a.T)
        if d == 1 or np.min(np.diff(np.linalg.eigvalsh(x))) > gap_min:
            return x
    raise DegenerateSpectrumError(f"no matrix with gaps above {gap_min} in {max_tries} draws")
