"""Symmetric matrices whose independent entries are Brownian sheets.

Entry ``(k, h)`` with ``k <= h`` is driven by its own sheet.  Diagonal
entries carry a factor ``sqrt(2)`` so that at unit time the matrix is a
GOE draw (off-diagonal variance 1, diagonal variance 2).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DegenerateSpectrumError, ValidationError
from .sheet import GridSpec, SheetField, sample_sheet_stack

__all__ = [
    "SymmetricMatrixField",
    "build_matrix_field",
    "pair_index",
    "upper_pairs",
    "check_distinct",
]

SQRT2 = np.sqrt(2.0)


def pair_index(k: int, h: int, d: int) -> int:
    """Row-major position of ``(k, h)``, ``k <= h``, among the upper-triangular pairs."""
    if not 0 <= k <= h < d:
        raise IndexError(f"pair ({k}, {h}) invalid for dimension {d}")
    return k * d - k * (k - 1) // 2 + (h - k)


def upper_pairs(d: int) -> list[tuple[int, int]]:
    return [(k, h) for k in range(d) for h in range(k, d)]


def _validate_initial(initial, d: int) -> np.ndarray:
    if initial is None:
        return np.zeros((d, d))
    a = np.array(initial, dtype=float)
    if a.shape != (d, d):
        raise ValidationError(f"initial matrix has shape {a.shape}, expected {(d, d)}")
    if not np.all(np.isfinite(a)):
        raise ValidationError("initial matrix has non-finite entries")
    asym = float(np.max(np.abs(a - a.T))) if d else 0.0
    if asym != 0.0:
        raise ValidationError(f"initial matrix is not symmetric (max asymmetry {asym:.3g})")
    return a


@dataclass(frozen=True, eq=False)
class SymmetricMatrixField:
    """Sheets for the upper triangle plus a deterministic starting matrix.

    ``stack[p]`` holds the values of the sheet for pair ``p`` in the order of
    :func:`upper_pairs`.
    """

    d: int
    grid: GridSpec
    stack: np.ndarray = field(repr=False)
    initial: np.ndarray = field(repr=False)
    stream_base: int = 0
    replica: int = 0

    def __post_init__(self):
        n_pairs = self.d * (self.d + 1) // 2
        if self.stack.shape != (n_pairs,) + self.grid.shape:
            raise ValidationError("sheet stack does not match dimension and grid")
        self.stack.setflags(write=False)
        self.initial.setflags(write=False)
        iu = np.triu_indices(self.d)
        object.__setattr__(self, "_iu", iu)
        scale = np.where(iu[0] == iu[1], SQRT2, 1.0)
        object.__setattr__(self, "_scale", scale)

    def sheet(self, k: int, h: int) -> SheetField:
        if k > h:
            k, h = h, k
        return SheetField(self.grid, self.stack[pair_index(k, h, self.d)])

    def b_at(self, i: int, j: int) -> np.ndarray:
        """Upper-triangular sheet values ``b_kh`` at grid point ``(i, j)`` as a vector."""
        self.grid.check_index(i, j)
        return self.stack[:, i, j].copy()

    def matrix_at(self, i: int, j: int) -> np.ndarray:
        """Dense symmetric matrix at grid point ``(i, j)``."""
        self.grid.check_index(i, j)
        m = np.zeros((self.d, self.d))
        rows, cols = self._iu
        m[rows, cols] = self._scale * self.stack[:, i, j]
        m[cols, rows] = m[rows, cols]
        return m + self.initial

    def rescaled_matrix_at(self, i: int, j: int) -> np.ndarray:
        """``matrix_at(i, j) / sqrt(d)``, the normalization for spectral measures."""
        return self.matrix_at(i, j) / np.sqrt(self.d)

    def coarsen(self, factor_s: int, factor_t: int) -> "SymmetricMatrixField":
        grid = self.grid.coarsened(factor_s, factor_t)
        return SymmetricMatrixField(self.d, grid,
                                    self.stack[:, ::factor_s, ::factor_t].copy(),
                                    self.initial.copy(), self.stream_base, self.replica)


def build_matrix_field(d: int, grid: GridSpec, initial=None, stream_base: int = 0,
                       replica: int = 0) -> SymmetricMatrixField:
    """Sample ``d(d+1)/2`` independent sheets and wrap them as a matrix field.

    Sheet ``(k, h)`` uses stream id ``stream_base + pair_index(k, h, d)``.
    """
    if int(d) != d or d < 1:
        raise ConfigurationError(f"dimension must be a positive integer, got {d}")
    d = int(d)
    init = _validate_initial(initial, d)
    n_pairs = d * (d + 1) // 2
    stack = sample_sheet_stack(grid, range(stream_base, stream_base + n_pairs), replica)
    return SymmetricMatrixField(d, grid, stack, init, stream_base, replica)


def check_distinct(matrix, epsilon: float) -> float:
    """Smallest consecutive eigenvalue gap of ``matrix``; raises if it is ``<= epsilon``."""
    if epsilon <= 0:
        raise ConfigurationError("epsilon must be positive")
    lam = np.linalg.eigvalsh(np.asarray(matrix, dtype=float))
    gap = float(np.min(np.diff(lam))) if lam.size > 1 else np.inf
    if gap <= epsilon:
        raise DegenerateSpectrumError(f"eigenvalues not separated by more than {epsilon}: gap {gap:.3g}")
    return gap
