"""Drift terms of the eigenvalue equation and the fixed-column Itô identity.

Along a vertical line ``s = S`` the eigenvalue ``lam_i`` of the sheet matrix
is a one-parameter semimartingale in ``t``.  Its Itô expansion has a
martingale part ``sum grad_b(lam_i) db`` and a drift ``S * sum_j 1/(lam_i -
lam_j) dt``.  :func:`ito_vertical_residual` measures what is left after
subtracting both from the realized increment, on nested time grids.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ensemble import EnsembleConfig, ReplicaDiscarded, map_replicas
from .errors import ConfigurationError, DiagnosticError, SingularDriftError
from .matrix_field import SymmetricMatrixField, build_matrix_field
from .sheet import GridSpec
from .spectral import eigh, grad_b

__all__ = [
    "DriftReport",
    "ExitDiagnostic",
    "ResidualLevel",
    "drift_at",
    "field_spectra",
    "gap_exit_scan",
    "column_residual",
    "ito_vertical_residual",
    "residual_table_csv",
]

DISCARD_GAP = 1e-3


@dataclass(frozen=True)
class DriftReport:
    dyson: np.ndarray
    cubic: np.ndarray
    point: tuple[float, float]


def drift_at(lam, s: float, t: float) -> DriftReport:
    """Repulsion sums ``sum_j 1/(lam_i - lam_j)`` and ``sum_j 2st/(lam_i - lam_j)^3``."""
    lam = np.asarray(lam, dtype=float)
    if lam.ndim != 1:
        raise ConfigurationError("eigenvalues must be a vector")
    if lam.size > 1 and np.any(lam[:-1] - lam[1:] < 0):
        raise ConfigurationError("eigenvalues must be sorted in decreasing order")
    diff = lam[:, None] - lam[None, :]
    off = ~np.eye(lam.size, dtype=bool)
    if np.any(diff[off] == 0):
        raise SingularDriftError("repeated eigenvalue makes the drift singular")
    np.fill_diagonal(diff, np.inf)
    inv = 1.0 / diff
    dyson = inv.sum(axis=1)
    cubic = 2.0 * s * t * (inv**3).sum(axis=1)
    return DriftReport(dyson, cubic, (float(s), float(t)))


@dataclass(frozen=True)
class ExitDiagnostic:
    epsilon: float
    first_exit: tuple[int, int] | None
    point: tuple[float, float] | None

    @property
    def exited(self) -> bool:
        return self.first_exit is not None


def field_spectra(field: SymmetricMatrixField) -> np.ndarray:
    """Ascending eigenvalues at every grid point, shape ``(n_s+1, n_t+1, d)``."""
    d = field.d
    rows, cols = np.triu_indices(d)
    scale = np.where(rows == cols, np.sqrt(2.0), 1.0)
    mats = np.zeros(field.grid.shape + (d, d))
    entries = np.moveaxis(field.stack, 0, -1) * scale
    mats[..., rows, cols] = entries
    mats[..., cols, rows] = entries
    mats += field.initial
    return np.linalg.eigvalsh(mats)


def gap_exit_scan(field: SymmetricMatrixField, epsilon: float) -> ExitDiagnostic:
    """First grid point whose smallest eigenvalue gap is ``<= epsilon``.

    Points are visited by anti-diagonals ``i + j = 0, 1, ...`` with ``i``
    increasing inside each, so the returned point has no exited point
    strictly below-left of it in the sweep.
    """
    if not epsilon > 0:
        raise ConfigurationError("epsilon must be positive")
    grid = field.grid
    if field.d < 2:
        return ExitDiagnostic(epsilon, None, None)
    spectra = field_spectra(field)
    gaps = np.min(np.diff(spectra, axis=-1), axis=-1)
    bad = gaps <= epsilon
    if not bad.any():
        return ExitDiagnostic(epsilon, None, None)
    ii, jj = np.nonzero(bad)
    order = np.lexsort((ii, ii + jj))
    i, j = int(ii[order[0]]), int(jj[order[0]])
    return ExitDiagnostic(epsilon, (i, j), grid.point(i, j))


def column_residual(field: SymmetricMatrixField, eig_index: int, column: int,
                    factor: int = 1) -> float:
    """Itô residual along column ``column`` using every ``factor``-th time point.

    The martingale sum is accumulated as a telescoped ``fsum`` so that it is
    exact when the gradient is constant (``d = 1``).
    """
    if not 0 <= eig_index < field.d:
        raise IndexError(f"eigenvalue index {eig_index} outside dimension {field.d}")
    grid = field.grid
    if grid.n_t % factor:
        raise ConfigurationError(f"n_t={grid.n_t} not divisible by {factor}")
    s_val = column * grid.ds
    dt = grid.dt * factor
    times = range(0, grid.n_t + 1, factor)
    decs = [eigh(field.matrix_at(column, j)) for j in times]
    b = field.stack[:, column, ::factor]
    terms = []
    drift = []
    for m in range(len(decs) - 1):
        g = grad_b(decs[m])[eig_index]
        terms.append(float(g @ b[:, m + 1]))
        terms.append(-float(g @ b[:, m]))
        lam = decs[m].lam
        if field.d > 1:
            gaps = lam[eig_index] - np.delete(lam, eig_index)
            drift.append(s_val * float(np.sum(1.0 / gaps)) * dt)
    increment = decs[-1].lam[eig_index] - decs[0].lam[eig_index]
    return increment - math.fsum(terms) - math.fsum(drift)


@dataclass(frozen=True)
class ResidualLevel:
    level: int
    n_t: int
    rms: float
    discards: int
    replicas: int


def ito_vertical_residual(d: int, eig_index: int, levels, reps: int, *, s: float = 1.0,
                          t: float = 1.0, initial=None, seed: int = 0, workers: int = 1,
                          discard_gap: float = DISCARD_GAP) -> list[ResidualLevel]:
    """RMS of the vertical Itô residual at each time resolution in ``levels``.

    One field is sampled per replica at the finest resolution; coarser
    levels read the embedded sub-grid of the same sample.  Replicas whose
    smallest gap on the column falls below ``discard_gap`` are discarded.
    """
    levels = sorted(int(n) for n in levels)
    finest = levels[-1]
    if any(finest % n for n in levels):
        raise ConfigurationError("every level must divide the finest level")
    grid = GridSpec(s, t, 1, finest, seed)
    config = EnsembleConfig(reps, seed, workers)

    def task(r):
        field = build_matrix_field(d, grid, initial, replica=r)
        if d > 1:
            spectra = field_spectra(field)[1]
            if np.min(np.diff(spectra, axis=-1)) < discard_gap:
                raise ReplicaDiscarded
        return [column_residual(field, eig_index, 1, finest // n) for n in levels]

    results = map_replicas(config, task)
    kept = [r for r in results if r is not None]
    discards = len(results) - len(kept)
    if not kept:
        raise DiagnosticError("every replica was discarded", discards=discards)
    arr = np.array(kept)
    table = []
    for lvl, n in enumerate(levels):
        rms = math.sqrt(math.fsum(arr[:, lvl] ** 2) / len(kept))
        table.append(ResidualLevel(lvl, n, rms, discards, reps))
    return table


def residual_table_csv(table) -> str:
    lines = ["level,n_t,rms,discards,replicas"]
    lines += [f"{r.level},{r.n_t},{r.rms:.17g},{r.discards},{r.replicas}" for r in table]
    return "\n".join(lines) + "\n"
