"""Probability measures on the line: empirical spectra and densities.

Both kinds expose their CDF as a piecewise-linear function on a set of
breakpoints (constant pieces for atoms), which makes the 1-Wasserstein and
Kolmogorov distances exact on the merged partition.
"""
from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .ensemble import EnsembleConfig, map_replicas
from .errors import ConfigurationError, ValidationError

__all__ = [
    "EmpiricalMeasure",
    "DensityMeasure",
    "empirical_from_spectrum",
    "integrate",
    "wasserstein1",
    "kolmogorov",
    "histogram",
    "histogram_csv",
    "HolderRow",
    "HolderReport",
    "holder_moment_diagnostic",
]

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


class EmpiricalMeasure:
    """Uniform weights on sorted atoms."""

    def __init__(self, atoms):
        a = np.sort(np.asarray(atoms, dtype=float).ravel())
        if a.size == 0:
            raise ValidationError("empirical measure needs at least one atom")
        if not np.all(np.isfinite(a)):
            raise ValidationError("atoms must be finite")
        a.setflags(write=False)
        self.atoms = a

    @property
    def d(self) -> int:
        return self.atoms.size

    @property
    def support(self) -> tuple[float, float]:
        return float(self.atoms[0]), float(self.atoms[-1])

    def breakpoints(self) -> np.ndarray:
        return np.unique(self.atoms)

    def cdf(self, x) -> np.ndarray:
        return np.searchsorted(self.atoms, np.asarray(x, dtype=float), side="right") / self.d

    def cdf_segments(self, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """CDF just right of ``xs[k]`` and just left of ``xs[k+1]`` on each interval."""
        left = self.cdf(xs[:-1])
        return left, left

    def integrate(self, g: Callable) -> float:
        vals = np.asarray(g(self.atoms), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ValidationError("test function is not finite on the atoms")
        return math.fsum(np.broadcast_to(vals, self.atoms.shape)) / self.d

    def __repr__(self):
        return f"EmpiricalMeasure(d={self.d}, support={self.support})"


def empirical_from_spectrum(lam, d: int | None = None) -> EmpiricalMeasure:
    """Empirical measure with atoms ``lam / sqrt(d)``."""
    lam = np.asarray(lam, dtype=float).ravel()
    if lam.size == 0:
        raise ValidationError("empty spectrum")
    d = lam.size if d is None else d
    if d != lam.size:
        raise ValidationError(f"spectrum has {lam.size} values, expected {d}")
    return EmpiricalMeasure(lam / math.sqrt(d))


def _panel_edges(a: float, b: float, n: int, sqrt_edges: bool) -> np.ndarray:
    if sqrt_edges:
        theta = np.linspace(math.pi, 0.0, n + 1)
        edges = 0.5 * (a + b) + 0.5 * (b - a) * np.cos(theta)
        edges[0], edges[-1] = a, b
        return edges
    return np.linspace(a, b, n + 1)


class DensityMeasure:
    """Absolutely continuous law with density ``pdf`` supported on ``[a, b]``.

    With ``sqrt_edges`` the quadrature works in the angle ``x = c + r cos(theta)``,
    which absorbs square-root vanishing at both ends.
    """

    def __init__(self, pdf: Callable, support: tuple[float, float], *,
                 sqrt_edges: bool = False, table_size: int = 4096,
                 mass_tol: float = 1e-9, normalize: bool = False):
        a, b = map(float, support)
        if not (np.isfinite(a) and np.isfinite(b) and a < b):
            raise ConfigurationError(f"invalid support [{a}, {b}]")
        self.pdf = pdf
        self.support = (a, b)
        self.sqrt_edges = sqrt_edges
        self._table_size = table_size
        self._table = None
        self.mass = self._raw_integral(lambda x: np.ones_like(x))
        if normalize:
            self._norm = self.mass
        else:
            if abs(self.mass - 1.0) > mass_tol:
                raise ValidationError(f"density integrates to {self.mass!r}, not 1")
            self._norm = 1.0

    def density(self, x) -> np.ndarray:
        """Normalized density values."""
        return np.asarray(self.pdf(np.asarray(x, dtype=float)), dtype=float) / self._norm

    def _raw_integral(self, g: Callable, panels: int = 64) -> float:
        a, b = self.support
        if self.sqrt_edges:
            c, r = 0.5 * (a + b), 0.5 * (b - a)
            edges = np.linspace(0.0, math.pi, panels + 1)
            mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
            half = 0.5 * (edges[1:] - edges[:-1])[:, None]
            theta = mid + half * _GL_NODES
            x = c + r * np.cos(theta)
            vals = g(x) * self.pdf(x) * r * np.sin(theta)
        else:
            edges = np.linspace(a, b, panels + 1)
            mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
            half = 0.5 * (edges[1:] - edges[:-1])[:, None]
            x = mid + half * _GL_NODES
            vals = g(x) * self.pdf(x)
        vals = np.asarray(vals, dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ValidationError("integrand is not finite on the support")
        return math.fsum((vals * _GL_WEIGHTS * half).ravel())

    def integrate(self, g: Callable, tol: float = 1e-9) -> float:
        """Composite Gauss-Legendre quadrature, doubling panels until two passes agree."""
        panels = 32
        prev = self._raw_integral(g, panels)
        while panels < 8192:
            panels *= 2
            cur = self._raw_integral(g, panels)
            if abs(cur - prev) <= 0.1 * tol:
                return cur / self._norm
            prev = cur
        return cur / self._norm

    def _cdf_table(self):
        if self._table is None:
            a, b = self.support
            xs = _panel_edges(a, b, self._table_size, self.sqrt_edges)
            mid = 0.5 * (xs[1:] + xs[:-1])[:, None]
            half = 0.5 * (xs[1:] - xs[:-1])[:, None]
            nodes = mid + half * _GL_NODES
            pieces = (np.asarray(self.pdf(nodes), dtype=float) * _GL_WEIGHTS * half).sum(axis=1)
            cum = np.concatenate([[0.0], np.cumsum(pieces)])
            cum /= cum[-1]
            self._table = (xs, cum)
        return self._table

    def breakpoints(self) -> np.ndarray:
        return self._cdf_table()[0]

    def cdf(self, x) -> np.ndarray:
        xs, cum = self._cdf_table()
        return np.interp(np.asarray(x, dtype=float), xs, cum, left=0.0, right=1.0)

    def cdf_segments(self, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.cdf(xs[:-1]), self.cdf(xs[1:])

    def __repr__(self):
        return f"DensityMeasure(support={self.support}, sqrt_edges={self.sqrt_edges})"


def integrate(mu, g: Callable) -> float:
    """``<g, mu>``: exact sum for atoms, quadrature for densities."""
    return mu.integrate(g)


def _merged(mu, nu) -> np.ndarray:
    return np.unique(np.concatenate([mu.breakpoints(), nu.breakpoints()]))


def _abs_linear_integral(p: np.ndarray, q: np.ndarray, width: np.ndarray) -> np.ndarray:
    """Exact ``int_0^w |p + (q - p) x / w| dx`` for each interval."""
    same = (p >= 0) == (q >= 0)
    out = np.empty_like(width)
    out[same] = 0.5 * width[same] * np.abs(p[same] + q[same])
    cross = ~same
    denom = np.abs(p[cross]) + np.abs(q[cross])
    out[cross] = 0.5 * width[cross] * (p[cross] ** 2 + q[cross] ** 2) / denom
    return out


def wasserstein1(mu, nu) -> float:
    """``int |F_mu - F_nu| dx`` on the merged breakpoint partition."""
    xs = _merged(mu, nu)
    if xs.size < 2:
        return 0.0
    ml, mr = mu.cdf_segments(xs)
    nl, nr = nu.cdf_segments(xs)
    return math.fsum(_abs_linear_integral(ml - nl, mr - nr, np.diff(xs)))


def kolmogorov(mu, nu) -> float:
    """``sup |F_mu - F_nu|`` including one-sided limits at breakpoints."""
    xs = _merged(mu, nu)
    if xs.size < 2:
        return float(np.abs(mu.cdf(xs) - nu.cdf(xs)).max())
    ml, mr = mu.cdf_segments(xs)
    nl, nr = nu.cdf_segments(xs)
    return float(max(np.abs(ml - nl).max(), np.abs(mr - nr).max()))


def histogram(measures: Sequence[EmpiricalMeasure], bins) -> tuple[np.ndarray, np.ndarray]:
    """Pooled mass per bin; returns ``(edges, mass)`` with ``mass`` summing to the captured fraction."""
    atoms = np.concatenate([m.atoms for m in measures])
    counts, edges = np.histogram(atoms, bins=bins)
    return edges, counts / atoms.size


def histogram_csv(edges, mass) -> str:
    buf = io.StringIO()
    buf.write("bin_left,bin_right,mass\n")
    for lo, hi, m in zip(edges[:-1], edges[1:], mass):
        buf.write(f"{lo:.17g},{hi:.17g},{m:.17g}\n")
    return buf.getvalue()


@dataclass(frozen=True)
class HolderRow:
    dz: float
    moment: float
    ratio: float


@dataclass(frozen=True)
class HolderReport:
    rows: list
    beta: float
    replicas: int
    pathwise_excess: float
    hw_excess: float

    @property
    def spread(self) -> float:
        """Largest over smallest ratio."""
        ratios = [r.ratio for r in self.rows if r.dz > 0]
        return max(ratios) / min(ratios)

    @property
    def pathwise_ok(self) -> bool:
        return self.pathwise_excess <= 0.0 and self.hw_excess <= 0.0


def holder_moment_diagnostic(sample_field: Callable, reps: int, f: Callable,
                             fprime_sup: float, pairs, beta: float,
                             workers: int = 1, seed: int = 0) -> HolderReport:
    """Fourth moments of linear-statistic increments against ``|dz|^(4 beta)``.

    ``sample_field(r)`` returns the matrix field of replica ``r``; ``pairs``
    lists grid-index pairs ``((i1, j1), (i2, j2))``.  Every increment is
    also checked against the pathwise Hoffman-Wielandt bounds; the report
    stores the largest excess of each (non-positive means it held).
    """
    if not 0.25 < beta < 0.5:
        raise ConfigurationError(f"beta must lie in (1/4, 1/2), got {beta}")
    if reps < 100:
        warnings.warn(f"only {reps} replicas; the fourth-moment estimates are noisy",
                      RuntimeWarning, stacklevel=2)
    pairs = [tuple(map(tuple, p)) for p in pairs]
    points = sorted({z for p in pairs for z in p})

    def task(r):
        field = sample_field(r)
        d = field.d
        mats = {z: field.matrix_at(*z) for z in points}
        lams = {z: np.linalg.eigvalsh(m) for z, m in mats.items()}
        stats = {z: math.fsum(f(l / math.sqrt(d))) / d for z, l in lams.items()}
        out = []
        path_excess = hw_excess = -math.inf
        for z1, z2 in pairs:
            inc = stats[z2] - stats[z1]
            db = field.b_at(*z2) - field.b_at(*z1)
            bound = 2.0 * fprime_sup**2 / d**2 * math.fsum(db**2)
            path_excess = max(path_excess, inc**2 - bound * (1 + 1e-12))
            dl = math.fsum((lams[z2] - lams[z1]) ** 2)
            dx = math.fsum(((mats[z2] - mats[z1]) ** 2).ravel())
            hw_excess = max(hw_excess, dl - dx * (1 + 1e-12) - 1e-300)
            out.append(inc)
        dzs = [math.dist(field.grid.point(*z1), field.grid.point(*z2)) for z1, z2 in pairs]
        return out, path_excess, hw_excess, dzs

    results = map_replicas(EnsembleConfig(reps, seed, workers), task)
    incs = np.array([r[0] for r in results])
    rows = []
    for k, dz in enumerate(results[0][3]):
        moment = math.fsum(incs[:, k] ** 4) / reps
        ratio = moment / dz ** (4 * beta) if dz > 0 else math.nan
        rows.append(HolderRow(dz, moment, ratio))
    return HolderReport(rows, beta, reps,
                        max(r[1] for r in results), max(r[2] for r in results))
