"""Discrete two-parameter stochastic calculus on sheet grids.

Index ``a`` runs along ``s`` and ``b`` along ``t``.  For a field ``M`` on
the grid:

* ``dt_inc(M)[a, b] = M[a, b+1] - M[a, b]`` (the strip from ``s = 0``),
* ``ds_inc(M)[a, b] = M[a+1, b] - M[a, b]``,
* ``rect_inc(M)[a, b]`` is the increment over cell ``(a, b)``.

All stochastic sums are left-point, so integrands are predictable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .ensemble import EnsembleConfig, map_replicas, summarize
from .errors import AlignmentError, ConfigurationError, ValidationError
from .sheet import GridSpec, SheetField, sample_sheet_stack

__all__ = [
    "JIntegralResult",
    "j_integral",
    "j_mm_identity_residual",
    "CovariationResult",
    "j_covariation_mc",
    "j_second_moment_mc",
    "GreenTestSpec",
    "constant_family",
    "zero_family",
    "drift_family",
    "smooth_family",
    "green_terms",
    "GreenLevel",
    "green_formula_residual",
    "DualLevel",
    "dual_refinement",
    "refinement_csv",
]


def _values(x) -> np.ndarray:
    return x.values if isinstance(x, SheetField) else np.asarray(x, dtype=float)


def dt_inc(m: np.ndarray) -> np.ndarray:
    return m[:-1, 1:] - m[:-1, :-1]


def ds_inc(m: np.ndarray) -> np.ndarray:
    return m[1:, :-1] - m[:-1, :-1]


def rect_inc(m: np.ndarray) -> np.ndarray:
    return m[1:, 1:] - m[:-1, 1:] - m[1:, :-1] + m[:-1, :-1]


def _fsum(a) -> float:
    # pairwise summation: deterministic for a fixed array and far faster than fsum
    return float(np.sum(a))


@dataclass(frozen=True)
class JIntegralResult:
    """Three grid versions of ``J_MN`` at one point.

    ``value_lineform - value_discrete == closure`` holds exactly on the grid.
    """

    value_lineform: float
    value_dualform: float
    value_discrete: float
    closure: float
    grid_level: int

    @property
    def sbp_residual(self) -> float:
        return self.value_lineform - self.value_discrete - self.closure


def j_integral(vertical, horizontal, upto: tuple[int, int] | None = None) -> JIntegralResult:
    """``J_MN`` at grid point ``upto`` (default: the far corner).

    ``vertical`` is ``M``, integrated along ``t``; ``horizontal`` is ``N``,
    integrated along ``s``.

    ``value_lineform``: top-edge line sum of ``M dN`` minus the area sum of ``M dN``.
    ``value_dualform``: right-edge line sum of ``N dM`` minus the area sum of ``N dM``.
    ``value_discrete``: sum over cells of ``dt_inc(M) * ds_inc(N)``.
    ``closure``: sum over cells of ``dt_inc(M) * rect_inc(N)``.
    """
    m, n = _values(vertical), _values(horizontal)
    if m.shape != n.shape:
        raise ValidationError(f"grid mismatch: {m.shape} vs {n.shape}")
    if (isinstance(vertical, SheetField) and isinstance(horizontal, SheetField)
            and vertical.grid != horizontal.grid):
        raise ValidationError("fields live on different grids")
    if upto is None:
        upto = (m.shape[0] - 1, m.shape[1] - 1)
    i_end, j_end = upto
    if not (0 <= i_end < m.shape[0] and 0 <= j_end < m.shape[1]):
        raise IndexError(f"point {upto} outside the grid")
    m = m[: i_end + 1, : j_end + 1]
    n = n[: i_end + 1, : j_end + 1]
    if i_end == 0 or j_end == 0:
        return JIntegralResult(0.0, 0.0, 0.0, 0.0, max(i_end, j_end))
    dtm, dsn, rn = dt_inc(m), ds_inc(n), rect_inc(n)
    top = np.diff(n[:, j_end])
    line = _fsum(m[:-1, j_end] * top) - _fsum(m[:-1, :-1] * rn)
    right = np.diff(m[i_end, :])
    dual = _fsum(n[i_end, :-1] * right) - _fsum(n[:-1, :-1] * rect_inc(m))
    discrete = _fsum(dtm * dsn)
    closure = _fsum(dtm * rn)
    return JIntegralResult(line, dual, discrete, closure, max(i_end, j_end))


def j_mm_identity_residual(sheet, upto: tuple[int, int] | None = None) -> tuple[float, float]:
    """``J_MM - (M^2/2 - [M]/2 - sum M dM)`` and a scale for it.

    ``[M]`` is the realized sum of squared ``s``-increments along the top edge.
    """
    m = _values(sheet)
    if upto is None:
        upto = (m.shape[0] - 1, m.shape[1] - 1)
    i_end, j_end = upto
    m = m[: i_end + 1, : j_end + 1]
    j = j_integral(m, m).value_lineform
    qv = _fsum(np.diff(m[:, j_end]) ** 2)
    area = _fsum(m[:-1, :-1] * rect_inc(m))
    rhs = 0.5 * m[i_end, j_end] ** 2 - 0.5 * qv - area
    scale = 1.0 + 0.5 * m[i_end, j_end] ** 2 + 0.5 * qv + _fsum(np.abs(m[:-1, :-1] * rect_inc(m)))
    return j - rhs, scale


@dataclass(frozen=True)
class CovariationResult:
    estimate: float
    standard_error: float
    theory: float
    replicas: int
    max_sbp_residual: float

    def within(self, n_se: float = 4.0) -> bool:
        return abs(self.estimate - self.theory) <= n_se * self.standard_error


def j_covariation_mc(labels: tuple, grid: GridSpec, reps: int, *, upto=None,
                     workers: int = 1) -> CovariationResult:
    """Monte Carlo ``E[J_MN J_M'N']`` with ``labels = (M, N, M', N')``.

    Equal labels share one sheet; distinct labels are independent sheets.
    The theory value is ``int d_t<M,M'> d_s<N,N'> = (s^2/2)(t^2/2)`` when
    ``M = M'`` and ``N = N'`` and 0 otherwise.
    """
    if len(labels) != 4:
        raise ConfigurationError("labels must name (M, N, M', N')")
    if reps < 1000:
        import warnings
        warnings.warn(f"{reps} replicas give low power for covariance checks",
                      RuntimeWarning, stacklevel=2)
    names = sorted(set(labels), key=labels.index)
    ids = [names.index(x) for x in labels]
    if upto is None:
        upto = (grid.n_s, grid.n_t)
    s, t = grid.point(*upto)

    def task(r):
        stack = sample_sheet_stack(grid, range(len(names)), r)
        first = j_integral(stack[ids[0]], stack[ids[1]], upto)
        second = j_integral(stack[ids[2]], stack[ids[3]], upto)
        worst = max(abs(first.sbp_residual), abs(second.sbp_residual))
        return first.value_lineform * second.value_lineform, worst

    out = map_replicas(EnsembleConfig(reps, grid.seed, workers), task)
    summary = summarize([o[0] for o in out])
    theory = (s * s / 2) * (t * t / 2) if (ids[0] == ids[2] and ids[1] == ids[3]) else 0.0
    return CovariationResult(summary.mean, summary.standard_error, theory, reps,
                             max(o[1] for o in out))


def j_second_moment_mc(grid: GridSpec, reps: int, points, workers: int = 1):
    """``E[J_MN(z)^2]`` at several grid points for independent ``M, N``.

    Returns ``(point, mean_J, mean_J2, theory)`` summaries per point, with
    theory ``s^2 t^2 / 4``.
    """
    points = [tuple(p) for p in points]

    def task(r):
        stack = sample_sheet_stack(grid, (0, 1), r)
        return [j_integral(stack[0], stack[1], p).value_lineform for p in points]

    out = np.array(map_replicas(EnsembleConfig(reps, grid.seed, workers), task))
    rows = []
    for k, p in enumerate(points):
        s, t = grid.point(*p)
        rows.append((p, summarize(out[:, k].tolist()), summarize((out[:, k] ** 2).tolist()),
                     s * s * t * t / 4))
    return rows


Coefficient = Callable[[int, int, np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class GreenTestSpec:
    """Test configuration for the Green formula.

    ``coefficient(j, i, s_grid, t_grid, mart)`` returns ``f_{j,i}`` on the grid (``i = 0``
    is the ``dt`` coefficient); ``mart`` is the stack of driving sheets so
    that coefficients may depend on their current values.  ``boundary(j, x)``
    gives ``F_j`` on the starting edge (``t = 0`` for the ``ds`` form,
    ``s = 0`` for the ``dt`` form).  ``rectangle`` is ``(s1, s2, t1, t2)``.
    """

    name: str
    d: int
    coefficient: Coefficient
    boundary: Callable[[int, np.ndarray], np.ndarray]
    rectangle: tuple = (0.0, 1.0, 0.0, 1.0)
    form: str = "ds"
    extent: tuple = (1.0, 1.0)

    def __post_init__(self):
        if self.form not in ("ds", "dt"):
            raise ConfigurationError(f"form must be 'ds' or 'dt', got {self.form!r}")
        s1, s2, t1, t2 = self.rectangle
        if not (0 <= s1 < s2 <= self.extent[0] and 0 <= t1 < t2 <= self.extent[1]):
            raise ConfigurationError(f"rectangle {self.rectangle} not inside the extent")


def _zeros_boundary(j, x):
    return np.zeros_like(x)


def constant_family(d: int = 2) -> GreenTestSpec:
    """Constant coefficients and ``F_j = 0`` on the lower edge."""
    table = np.array([[0.7, -0.4, 0.9], [-0.3, 0.5, -0.6]])[:d, : d + 1]

    def coef(j, i, s_grid, t_grid, mart):
        return np.full(s_grid.shape, table[j % table.shape[0], i % table.shape[1]])

    return GreenTestSpec("constant", d, coef, _zeros_boundary)


def zero_family(d: int = 2) -> GreenTestSpec:
    """All coefficients zero; ``F_j`` depends on ``s`` only."""
    def coef(j, i, s_grid, t_grid, mart):
        return np.zeros(s_grid.shape)

    def boundary(j, x):
        return np.sin(2 * np.pi * x + j) + x

    return GreenTestSpec("zero", d, coef, boundary)


def drift_family() -> GreenTestSpec:
    """One sheet, only the ``dt`` coefficient."""
    def coef(j, i, s_grid, t_grid, mart):
        return np.full(s_grid.shape, 1.5) if i == 0 else np.zeros(s_grid.shape)

    return GreenTestSpec("drift", 1, coef, _zeros_boundary)


def smooth_family(d: int = 2) -> GreenTestSpec:
    """Smooth bounded coefficients depending on position and sheet values, ``dt`` form."""
    def coef(j, i, s_grid, t_grid, mart):
        if i == 0:
            return 0.5 * np.cos(s_grid + 2 * t_grid + j)
        return 0.4 * np.cos(s_grid - t_grid + i + j) + 0.3 * np.tanh(mart[i - 1])

    def boundary(j, x):
        return np.cos(np.pi * x + j)

    return GreenTestSpec("smooth", d, coef, boundary, form="dt")


@dataclass(frozen=True)
class GreenTerms:
    lhs: float
    area: float
    j_term: float
    mixed: float
    closure: float
    scale: float

    @property
    def residual(self) -> float:
        return self.lhs - (self.area + self.j_term + self.mixed)


def _rect_indices(spec: GreenTestSpec, grid: GridSpec):
    s1, s2, t1, t2 = spec.rectangle
    try:
        a1, b1 = grid.index_of(s1, t1)
        a2, b2 = grid.index_of(s2, t2)
    except ConfigurationError as exc:
        raise AlignmentError(f"rectangle {spec.rectangle} is not on the grid lines") from exc
    return a1, a2, b1, b2


def green_terms(spec: GreenTestSpec, grid: GridSpec, mart: np.ndarray) -> GreenTerms:
    """Both sides of the Green formula for one sample of the driving sheets."""
    if mart.shape != (spec.d,) + grid.shape:
        raise ValidationError("driving sheets do not match the test configuration and grid")
    a1, a2, b1, b2 = _rect_indices(spec, grid)
    s_grid, t_grid = np.meshgrid(grid.s_values(), grid.t_values(), indexing="ij")
    coefs = [[spec.coefficient(j, i, s_grid, t_grid, mart) for i in range(spec.d + 1)]
             for j in range(spec.d)]
    if spec.form == "dt":
        # the t-line form is the s-line form with the axes exchanged
        mart = np.swapaxes(mart, 1, 2)
        coefs = [[c.T for c in row] for row in coefs]
        a1, a2, b1, b2 = b1, b2, a1, a2
        first, step = grid.t_values(), grid.ds
    else:
        first, step = grid.s_values(), grid.dt
    lhs, area, jt, mixed, closure, scale = [], [], [], [], [], []
    dt_all = [dt_inc(m) for m in mart]
    for j in range(spec.d):
        m = mart[j]
        dF = sum(coefs[j][i + 1][:-1, :-1] * dt_all[i] for i in range(spec.d))
        dF = dF + coefs[j][0][:-1, :-1] * step
        running = np.zeros_like(m)
        running[:-1, 0] = spec.boundary(j, first[:-1])
        running[:-1, 1:] = running[:-1, :1] + np.cumsum(dF, axis=1)
        cells = (slice(a1, a2), slice(b1, b2))
        dsm = ds_inc(m)
        rm = rect_inc(m)
        top = running[a1:a2, b2] * np.diff(m[a1:a2 + 1, b2])
        bottom = running[a1:a2, b1] * np.diff(m[a1:a2 + 1, b1])
        lhs += [top, -bottom]
        area.append((running[:-1, :-1] * rm)[cells])
        for i in range(spec.d):
            jt.append((coefs[j][i + 1][:-1, :-1] * dt_all[i] * dsm)[cells])
        mixed.append((coefs[j][0][:-1, :-1] * dsm * step)[cells])
        closure.append((dF * rm)[cells])
    parts = [lhs, area, jt, mixed]
    scale = 1.0 + sum(_fsum(np.abs(np.concatenate([np.ravel(x) for x in p]))) for p in parts)
    flat = [_fsum(np.concatenate([np.ravel(x) for x in p])) for p in parts + [closure]]
    return GreenTerms(*flat, scale)


@dataclass(frozen=True)
class GreenLevel:
    level: int
    n: int
    rms: float
    se: float
    max_scaled: float


def _rms_with_se(values) -> tuple[float, float]:
    sq = summarize([v * v for v in values])
    rms = math.sqrt(sq.mean)
    se = sq.standard_error / (2 * rms) if rms > 0 else 0.0
    return rms, se


def green_formula_residual(spec: GreenTestSpec, levels, reps: int, seed: int = 0,
                           workers: int = 1) -> list[GreenLevel]:
    """RMS Green residual on square grids of the given sizes.

    Each replica samples the finest grid once and restricts it to the
    coarser ones.  ``max_scaled`` is the largest ``|residual| / scale``.
    """
    levels = sorted(int(n) for n in levels)
    finest = levels[-1]
    if any(finest % n for n in levels):
        raise ConfigurationError("every level must divide the finest level")
    fine = GridSpec(spec.extent[0], spec.extent[1], finest, finest, seed)
    grids = [fine.coarsened(finest // n, finest // n) for n in levels]
    for g in grids:
        _rect_indices(spec, g)

    def task(r):
        stack = sample_sheet_stack(fine, range(spec.d), r)
        out = []
        for g, n in zip(grids, levels):
            k = finest // n
            terms = green_terms(spec, g, stack[:, ::k, ::k])
            out.append((terms.residual, abs(terms.residual) / terms.scale))
        return out

    res = map_replicas(EnsembleConfig(reps, seed, workers), task)
    table = []
    for lvl, n in enumerate(levels):
        rms, se = _rms_with_se([r[lvl][0] for r in res])
        table.append(GreenLevel(lvl, n, rms, se, max(r[lvl][1] for r in res)))
    return table


@dataclass(frozen=True)
class DualLevel:
    level: int
    n: int
    rms: float
    se: float


def dual_refinement(levels, reps: int, seed: int = 0, workers: int = 1,
                    extent=(1.0, 1.0)) -> list[DualLevel]:
    """RMS of ``value_lineform - value_dualform`` for independent sheets per level."""
    levels = sorted(int(n) for n in levels)
    finest = levels[-1]
    if any(finest % n for n in levels):
        raise ConfigurationError("every level must divide the finest level")
    fine = GridSpec(extent[0], extent[1], finest, finest, seed)

    def task(r):
        stack = sample_sheet_stack(fine, (0, 1), r)
        out = []
        for n in levels:
            k = finest // n
            res = j_integral(stack[0, ::k, ::k], stack[1, ::k, ::k])
            out.append(res.value_lineform - res.value_dualform)
        return out

    res = map_replicas(EnsembleConfig(reps, seed, workers), task)
    table = []
    for lvl, n in enumerate(levels):
        rms, se = _rms_with_se([r[lvl] for r in res])
        table.append(DualLevel(lvl, n, rms, se))
    return table


def refinement_csv(green, dual) -> str:
    """``level,n,rms_green,rms_dual,se`` rows; missing columns are written as ``nan``.

    ``se`` is the standard error of the Green RMS when present, else of the dual RMS.
    """
    by_n = {}
    for row in green or []:
        by_n.setdefault(row.n, {})["g"] = row
    for row in dual or []:
        by_n.setdefault(row.n, {})["d"] = row
    lines = ["level,n,rms_green,rms_dual,se"]
    for lvl, n in enumerate(sorted(by_n)):
        g, d = by_n[n].get("g"), by_n[n].get("d")
        rg = g.rms if g else math.nan
        rd = d.rms if d else math.nan
        se = g.se if g else (d.se if d else math.nan)
        lines.append(f"{lvl},{n},{rg:.17g},{rd:.17g},{se:.17g}")
    return "\n".join(lines) + "\n"
