"""Limiting spectral law: semicircle, its Stieltjes transform and free convolution.

Conventions: ``G(z) = <1/(z - x), mu>`` so that ``Im G < 0`` whenever
``Im z > 0``.  The variance parameter is the product ``st``.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (ConditioningError, ConfigurationError, ConvergenceError,
                     RegimeError, ValidationError)
from .measures import DensityMeasure, EmpiricalMeasure

__all__ = [
    "semicircle_pdf",
    "rescaled_semicircle",
    "stieltjes_closed_form",
    "stieltjes_free_convolve",
    "stieltjes_identity_residuals",
    "atomic_transform",
    "StieltjesEvaluator",
    "density_from_stieltjes",
    "free_convolution_measure",
    "TestFunction",
    "polynomial_test_function",
    "named_test_function",
    "burgers_residual",
    "burgers_richardson",
    "MVResult",
    "mckean_vlasov_residual",
    "density_csv",
    "catalan",
]

DEFAULT_LADDER = (1e-2, 5e-3, 2.5e-3)
_MIN_DAMPING = 1.0 / 64


def semicircle_pdf(x):
    """``sqrt(4 - x^2) / (2 pi)`` on ``[-2, 2]``, zero elsewhere."""
    x = np.asarray(x, dtype=float)
    return np.sqrt(np.clip(4.0 - x * x, 0.0, None)) / (2.0 * np.pi)


def rescaled_semicircle(s: float, t: float):
    """Semicircle law of variance ``st``; the point mass at 0 when ``st = 0``."""
    if s < 0 or t < 0:
        raise ConfigurationError(f"coordinates must be non-negative, got ({s}, {t})")
    st = s * t
    if st == 0:
        return EmpiricalMeasure([0.0])
    r = math.sqrt(st)
    return DensityMeasure(lambda x: semicircle_pdf(np.asarray(x) / r) / r,
                          (-2.0 * r, 2.0 * r), sqrt_edges=True)


def catalan(k: int) -> int:
    return math.comb(2 * k, k) // (k + 1)


def _check_upper(z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    if np.any(~(z.imag > 0)):
        raise ValidationError("z must lie in the open upper half-plane")
    return z


def stieltjes_closed_form(z, st: float):
    """Root of ``st G^2 - z G + 1 = 0`` with ``Im G < 0``.

    Both roots are formed without cancellation (``(z + r)/(2st)`` and
    ``2/(z + r)``) and the one in the lower half-plane is kept.
    """
    if st < 0:
        raise ConfigurationError("st must be non-negative")
    z = _check_upper(z)
    if st == 0:
        return 1.0 / z
    g = _closed_form(z, st)
    return g[()] if g.ndim == 0 else g


def _closed_form(z: np.ndarray, st: float) -> np.ndarray:
    # keeps the precision of z (used with clongdouble below)
    r = np.sqrt(z * z - 4 * st)
    ga = (z + r) / (2 * st)
    gb = 2 / (z + r)
    return np.where(gb.imag < 0, gb, ga)


def stieltjes_identity_residuals(z, st: float, step: float = 1e-5):
    """Residuals of the quadratic and its first two ``z``-derivatives.

    Returns ``(r0, r1, r2)`` arrays.  ``r0`` uses the double-precision
    transform.  The derivatives are central differences with the given
    step, evaluated in extended precision: in double precision the second
    difference alone carries roundoff near ``eps / step^2``.
    """
    if not st > 0:
        raise ConfigurationError("st must be positive")
    z = np.atleast_1d(_check_upper(z))
    g = stieltjes_closed_form(z, st)
    r0 = np.abs(st * g * g - z * g + 1)
    zl = z.astype(np.clongdouble)
    h = np.longdouble(step)
    gl = _closed_form(zl, st)
    gp = _closed_form(zl + h, st)
    gm = _closed_form(zl - h, st)
    g1 = (gp - gm) / (2 * h)
    g2 = (gp - 2 * gl + gm) / (h * h)
    r1 = np.abs(2 * st * gl * g1 - zl * g1 - gl).astype(float)
    r2 = np.abs(2 * st * (gl * g2 + g1 * g1) - zl * g2 - 2 * g1).astype(float)
    return r0, r1, r2


def atomic_transform(atoms, weights=None) -> Callable:
    """Stieltjes transform of a finite atomic law."""
    a = np.asarray(atoms, dtype=float).ravel()
    w = np.full(a.size, 1.0 / a.size) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != a.shape or abs(w.sum() - 1.0) > 1e-12 or np.any(w < 0):
        raise ValidationError("weights must be non-negative and sum to 1")

    def g0(z):
        z = np.asarray(z, dtype=complex)
        return np.sum(w / (z[..., None] - a), axis=-1)

    return g0


def stieltjes_free_convolve(z, st: float, g0: Callable, *, tol: float = 1e-12,
                            max_iter: int = 10_000, damping: float = 0.5):
    """Solve ``G = g0(z - st G)`` by damped iteration.

    The damping of an entry is halved when its update reverses direction
    and grows, down to 1/64; this keeps the iteration stable near the support.
    """
    z = _check_upper(z)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    if st == 0:
        g = np.asarray(g0(z), dtype=complex)
        return g[0] if scalar else g
    g = np.asarray(g0(z), dtype=complex).copy()
    alpha = np.full(z.shape, damping)
    prev = np.zeros(z.shape, dtype=complex)
    active = np.ones(z.shape, dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        delta = g0(z[idx] - st * g[idx]) - g[idx]
        resid = np.abs(delta)
        done = resid < tol
        # oscillation: the update reversed direction and did not shrink
        flip = (delta * prev[idx].conj()).real < 0
        grew = flip & (resid > np.abs(prev[idx]))
        alpha[idx[grew]] = np.maximum(alpha[idx[grew]] * 0.5, _MIN_DAMPING)
        prev[idx] = delta
        g[idx] += alpha[idx] * delta
        active[idx[done]] = False
        if not active.any():
            break
    else:
        resid = float(np.max(np.abs(g - g0(z - st * g))))
        raise ConvergenceError(f"free convolution did not converge in {max_iter} steps",
                               residual=resid)
    g = np.where(g.imag < 0, g, g.conj())
    return g[0] if scalar else g


@dataclass(frozen=True)
class StieltjesEvaluator:
    """Transform of the semicircle of variance ``st`` freely convolved with an initial law.

    ``initial_atoms`` ``None`` means the point mass at 0, evaluated in closed form.
    """

    st: float
    initial_atoms: tuple | None = None
    initial_weights: tuple | None = None

    def __post_init__(self):
        if not (self.st >= 0 and math.isfinite(self.st)):
            raise ConfigurationError(f"st must be finite and non-negative, got {self.st}")

    @property
    def closed_form(self) -> bool:
        return self.initial_atoms is None

    def initial_transform(self) -> Callable:
        if self.closed_form:
            return lambda z: 1.0 / np.asarray(z, dtype=complex)
        return atomic_transform(self.initial_atoms, self.initial_weights)

    def with_st(self, st: float) -> "StieltjesEvaluator":
        return StieltjesEvaluator(st, self.initial_atoms, self.initial_weights)

    def __call__(self, z):
        if self.closed_form:
            return stieltjes_closed_form(z, self.st)
        return stieltjes_free_convolve(z, self.st, self.initial_transform())

    def support_bound(self) -> tuple[float, float]:
        """Interval containing the support: initial hull widened by ``2 sqrt(st)``."""
        lo, hi = (0.0, 0.0) if self.closed_form else (min(self.initial_atoms),
                                                        max(self.initial_atoms))
        r = 2.0 * math.sqrt(self.st)
        return lo - r, hi + r


def density_from_stieltjes(evaluator, x, eta_ladder=DEFAULT_LADDER):
    """``-Im G(x + i eta) / pi`` extrapolated linearly to ``eta = 0`` and clipped at 0."""
    eta = np.asarray(eta_ladder, dtype=float)
    if eta.size < 2:
        raise ConfigurationError("eta ladder needs at least two rungs")
    if np.any(eta <= 0) or np.any(np.diff(eta) >= 0):
        raise ConfigurationError("eta ladder must be positive and strictly decreasing")
    x = np.asarray(x, dtype=float)
    flat = x.ravel()
    vals = np.stack([-np.asarray(evaluator(flat + 1j * e)).imag / np.pi for e in eta])
    # least-squares line in eta, evaluated at 0
    em = eta.mean()
    slope = ((eta - em)[:, None] * (vals - vals.mean(axis=0))).sum(axis=0) / ((eta - em) ** 2).sum()
    out = np.clip(vals.mean(axis=0) - slope * em, 0.0, None)
    return out.reshape(x.shape) if x.ndim else float(out[0])


def free_convolution_measure(evaluator: StieltjesEvaluator, n_points: int = 2001,
                             eta_ladder=DEFAULT_LADDER) -> DensityMeasure:
    """Density measure recovered on a uniform table over the support bound."""
    lo, hi = evaluator.support_bound()
    pad = 0.25 * max(hi - lo, 1e-3)
    xs = np.linspace(lo - pad, hi + pad, n_points)
    pdf = density_from_stieltjes(evaluator, xs, eta_ladder)
    return DensityMeasure(lambda x: np.interp(x, xs, pdf, left=0.0, right=0.0),
                          (xs[0], xs[-1]), normalize=True, table_size=4 * n_points)


@dataclass(frozen=True)
class TestFunction:
    """A test function with its first three derivatives."""

    f: Callable
    d1: Callable
    d2: Callable
    d3: Callable
    name: str = "f"

    __test__ = False


def polynomial_test_function(coeffs, name: str = "poly") -> TestFunction:
    """Test function from increasing-degree coefficients."""
    p = np.polynomial.Polynomial(coeffs)
    return TestFunction(p, p.deriv(1), p.deriv(2), p.deriv(3), name)


def named_test_function(name: str) -> TestFunction:
    """``const``, ``x2``, ``x4``, ``sin`` or ``arctan``."""
    if name == "const":
        return polynomial_test_function([1.0], name)
    if name == "x2":
        return polynomial_test_function([0, 0, 1.0], name)
    if name == "x4":
        return polynomial_test_function([0, 0, 0, 0, 1.0], name)
    if name == "sin":
        return TestFunction(np.sin, np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x), name)
    if name == "arctan":
        return TestFunction(np.arctan, lambda x: 1 / (1 + x * x),
                            lambda x: -2 * x / (1 + x * x) ** 2,
                            lambda x: (6 * x * x - 2) / (1 + x * x) ** 3, name)
    raise ConfigurationError(f"unknown test function {name!r}")


def _require_point_mass(evaluator) -> None:
    if evaluator is not None and not evaluator.closed_form:
        raise RegimeError("the limiting equations are only available for a point-mass start")


def _mixed(fn: Callable, s: float, t: float, hs: float, ht: float):
    return (fn(s + hs, t + ht) - fn(s + hs, t - ht) - fn(s - hs, t + ht)
            + fn(s - hs, t - ht)) / (4.0 * hs * ht)


def burgers_residual(s: float, t: float, z: complex, h_s: float = 1e-3,
                     h_t: float | None = None, evaluator: StieltjesEvaluator | None = None):
    """Mixed ``(s, t)`` derivative of ``G`` minus the Burgers right-hand side."""
    _require_point_mass(evaluator)
    h_t = h_s if h_t is None else h_t
    if not (s > h_s > 0 and t > h_t > 0):
        raise ConfigurationError("need s > h_s > 0 and t > h_t > 0")
    z = complex(z)
    if z.imag <= 0:
        raise ValidationError("z must lie in the open upper half-plane")
    if z.imag < 10.0 * math.sqrt(s * t) * max(h_s, h_t):
        raise ConditioningError("z is too close to the real axis for this step")
    lhs = _mixed(lambda a, b: stieltjes_closed_form(z, a * b), s, t, h_s, h_t)
    dz = 1e-4 * (1.0 + abs(z))
    st = s * t
    g = stieltjes_closed_form(z, st)
    gp = stieltjes_closed_form(z + dz, st)
    gm = stieltjes_closed_form(z - dz, st)
    g1 = (gp - gm) / (2.0 * dz)
    g2 = (gp - 2.0 * g + gm) / dz**2
    rhs = 0.5 * g * g1 + 0.5 * z * (g * g2 + g1 * g1)
    return complex(lhs - rhs)


def burgers_richardson(s: float, t: float, z: complex, h: float = 1e-3) -> tuple[complex, float]:
    """Residual at ``h`` and the ratio ``|r(h) - r(h/2)| / |r(h/2) - r(h/4)|``."""
    r = [burgers_residual(s, t, z, h / k) for k in (1, 2, 4)]
    return r[0], abs(r[0] - r[1]) / abs(r[1] - r[2])


_MV_NODES = 96


def _semicircle_nodes(st: float, n: int = _MV_NODES):
    """Gauss-Legendre nodes and weights for the semicircle of variance ``st`` in the angle variable."""
    u, w = np.polynomial.legendre.leggauss(n)
    theta = 0.5 * np.pi * (u + 1.0)
    r = 2.0 * math.sqrt(st)
    x = r * np.cos(theta)
    # pdf(x) dx = (2/pi) sin^2(theta) dtheta
    weights = 0.5 * np.pi * w * (2.0 / np.pi) * np.sin(theta) ** 2
    return x, weights


def _moment(f: Callable, st: float) -> float:
    if st == 0:
        return float(f(0.0))
    x, w = _semicircle_nodes(st)
    return math.fsum(w * f(x))


@dataclass(frozen=True)
class MVResult:
    lhs: float
    rhs: float

    @property
    def residual(self) -> float:
        return abs(self.lhs - self.rhs)


def mckean_vlasov_residual(s: float, t: float, f: TestFunction, h: float = 1e-2,
                           evaluator: StieltjesEvaluator | None = None) -> MVResult:
    """Both sides of the McKean-Vlasov equation for the test function ``f``.

    The double integral uses the kernel ``[(x f')'(x) - (y f')'(y)] / (x - y)``
    with its diagonal limit ``(x f')''``.
    """
    _require_point_mass(evaluator)
    if not (s > h > 0 and t > h > 0):
        raise ConfigurationError("need s > h > 0 and t > h > 0")
    lhs = _mixed(lambda a, b: _moment(f.f, a * b), s, t, h, h)
    x, w = _semicircle_nodes(s * t)
    g = f.d1(x) + x * f.d2(x)            # (x f')'
    g_diag = 2.0 * f.d2(x) + x * f.d3(x)  # (x f')''
    dx = x[:, None] - x[None, :]
    same = np.abs(dx) <= 1e-13 * (1.0 + np.abs(x[:, None]))
    with np.errstate(divide="ignore", invalid="ignore"):
        kern = (g[:, None] - g[None, :]) / dx
    kern = np.where(same, 0.5 * (g_diag[:, None] + g_diag[None, :]), kern)
    rhs = 0.25 * math.fsum((w[:, None] * w[None, :] * kern).ravel())
    return MVResult(float(lhs), float(rhs))


def density_csv(x, pdf) -> str:
    buf = io.StringIO()
    buf.write("x,pdf\n")
    for a, b in zip(np.ravel(x), np.ravel(pdf)):
        buf.write(f"{a:.17g},{b:.17g}\n")
    return buf.getvalue()
