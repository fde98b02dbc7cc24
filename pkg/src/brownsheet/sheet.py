"""Brownian sheets on uniform rectangular grids.

A sheet is sampled from i.i.d. Gaussian cell increments with variance
``ds * dt`` followed by a two-dimensional cumulative sum, which reproduces
the covariance ``(s1 ^ s2)(t1 ^ t2)`` exactly at the grid points.

Random streams are counter based: the Philox key is derived from
``(root_seed, replica)`` and the stream id selects a disjoint block of the
256-bit counter.  Every sheet is therefore a pure function of
``(seed, replica, stream_id)``, independent of scheduling.
"""
from __future__ import annotations

import functools
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ValidationError

__all__ = [
    "GridSpec",
    "SheetField",
    "stream_generator",
    "sample_sheet",
    "sample_sheet_stack",
    "vertical_slice",
    "horizontal_slice",
    "sheet_to_csv",
]

_U64 = 2**64


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on ``[0, s_max] x [0, t_max]`` with ``n_s x n_t`` cells."""

    s_max: float
    t_max: float
    n_s: int
    n_t: int
    seed: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.s_max) and np.isfinite(self.t_max)):
            raise ConfigurationError("grid extents must be finite")
        if self.s_max <= 0 or self.t_max <= 0:
            raise ConfigurationError(
                f"grid extents must be positive, got {self.s_max} x {self.t_max}")
        if int(self.n_s) != self.n_s or int(self.n_t) != self.n_t:
            raise ConfigurationError("cell counts must be integers")
        if self.n_s < 1 or self.n_t < 1:
            raise ConfigurationError(
                f"grid needs at least one cell per axis, got {self.n_s} x {self.n_t}")
        if not 0 <= int(self.seed) < _U64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")

    @property
    def ds(self) -> float:
        return self.s_max / self.n_s

    @property
    def dt(self) -> float:
        return self.t_max / self.n_t

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_s + 1, self.n_t + 1)

    def s_values(self) -> np.ndarray:
        return np.arange(self.n_s + 1) * self.ds

    def t_values(self) -> np.ndarray:
        return np.arange(self.n_t + 1) * self.dt

    def point(self, i: int, j: int) -> tuple[float, float]:
        self.check_index(i, j)
        return (i * self.ds, j * self.dt)

    def check_index(self, i: int, j: int) -> None:
        if not (0 <= i <= self.n_s and 0 <= j <= self.n_t):
            raise IndexError(
                f"grid index ({i}, {j}) outside [0, {self.n_s}] x [0, {self.n_t}]")

    def index_of(self, s: float, t: float, tol: float = 1e-9) -> tuple[int, int]:
        """Grid index of the point ``(s, t)``; raises if it is not a grid point."""
        fi, fj = s / self.ds, t / self.dt
        i, j = int(round(fi)), int(round(fj))
        if abs(fi - i) > tol or abs(fj - j) > tol:
            raise ConfigurationError(f"point ({s}, {t}) is not on the grid")
        self.check_index(i, j)
        return i, j

    def coarsened(self, factor_s: int, factor_t: int) -> "GridSpec":
        if self.n_s % factor_s or self.n_t % factor_t:
            raise ConfigurationError(
                f"cannot coarsen {self.n_s}x{self.n_t} by {factor_s}x{factor_t}")
        return GridSpec(self.s_max, self.t_max, self.n_s // factor_s,
                        self.n_t // factor_t, self.seed)


@dataclass(frozen=True, eq=False)
class SheetField:
    """Sampled sheet values ``values[i, j] = B(i*ds, j*dt)``."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise ValidationError(
                f"values shape {vals.shape} does not match grid {self.grid.shape}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def at(self, i: int, j: int) -> float:
        self.grid.check_index(i, j)
        return float(self.values[i, j])

    def cell_increments(self) -> np.ndarray:
        """Rectangle increments ``B((z_ij, z_i+1,j+1])``, shape ``(n_s, n_t)``."""
        v = self.values
        return v[1:, 1:] - v[:-1, 1:] - v[1:, :-1] + v[:-1, :-1]

    def coarsen(self, factor_s: int, factor_t: int) -> "SheetField":
        """Restriction to the embedded coarser grid (no resampling)."""
        grid = self.grid.coarsened(factor_s, factor_t)
        return SheetField(grid, self.values[::factor_s, ::factor_t].copy())

    def transposed(self) -> "SheetField":
        """The same sheet with the roles of ``s`` and ``t`` exchanged."""
        g = self.grid
        return SheetField(GridSpec(g.t_max, g.s_max, g.n_t, g.n_s, g.seed),
                          self.values.T.copy())

    @classmethod
    def zeros(cls, grid: GridSpec) -> "SheetField":
        return cls(grid, np.zeros(grid.shape))


@functools.lru_cache(maxsize=4096)
def _philox_key(seed: int, replica: int) -> tuple[int, int]:
    state = np.random.SeedSequence([int(seed), int(replica)]).generate_state(2, np.uint64)
    return int(state[0]), int(state[1])


def stream_generator(seed: int, stream_id: int, replica: int = 0) -> np.random.Generator:
    """Counter-based generator for ``(seed, replica, stream_id)``.

    The stream id occupies the most significant counter word, so streams
    never overlap unless one of them draws more than ``2**192`` blocks.
    """
    if stream_id < 0 or replica < 0:
        raise ConfigurationError("stream_id and replica must be non-negative")
    if stream_id >= _U64:
        raise ConfigurationError("stream_id must fit in 64 bits")
    key = np.array(_philox_key(seed, replica), dtype=np.uint64)
    counter = np.array([0, 0, 0, stream_id], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


class _StreamCursor:
    """One Philox generator whose counter is repositioned per stream.

    Repositioning yields exactly the draws of a fresh generator for the
    same stream, at a fraction of the construction cost.  Not thread safe;
    create one per task.
    """

    def __init__(self, seed: int, replica: int):
        if replica < 0:
            raise ConfigurationError("replica must be non-negative")
        self._key = np.array(_philox_key(seed, replica), dtype=np.uint64)
        self._bits = np.random.Philox(key=self._key)
        self.generator = np.random.Generator(self._bits)
        self._template = self._bits.state

    def seek(self, stream_id: int) -> np.random.Generator:
        if not 0 <= stream_id < _U64:
            raise ConfigurationError("stream_id must fit in 64 bits")
        state = dict(self._template)
        state["state"] = {"counter": np.array([0, 0, 0, stream_id], dtype=np.uint64),
                          "key": self._key}
        state["buffer"] = np.zeros(4, dtype=np.uint64)
        state["buffer_pos"] = 4
        state["has_uint32"] = 0
        state["uinteger"] = 0
        self._bits.state = state
        return self.generator


def sample_sheet_stack(grid: GridSpec, stream_ids, replica: int = 0) -> np.ndarray:
    """Values of several sheets, shape ``(len(stream_ids), n_s+1, n_t+1)``.

    Sheet ``p`` equals ``sample_sheet(grid, stream_ids[p], replica).values``.
    """
    cursor = _StreamCursor(grid.seed, replica)
    ids = list(stream_ids)
    cells = np.empty((len(ids), grid.n_s, grid.n_t))
    for p, sid in enumerate(ids):
        cursor.seek(sid).standard_normal(out=cells[p])
    cells *= np.sqrt(grid.ds * grid.dt)
    values = np.zeros((len(ids),) + grid.shape)
    values[:, 1:, 1:] = np.cumsum(np.cumsum(cells, axis=1), axis=2)
    return values


def sample_sheet(grid: GridSpec, stream_id: int, replica: int = 0) -> SheetField:
    """Sample a standard Brownian sheet on ``grid``.

    Parameters
    ----------
    grid : GridSpec
        Discretization; ``grid.seed`` is the root seed.
    stream_id : int
        Identifies an independent stream under the root seed.
    replica : int
        Monte Carlo replica index; distinct replicas are independent.
    """
    rng = stream_generator(grid.seed, stream_id, replica)
    cells = rng.standard_normal((grid.n_s, grid.n_t)) * np.sqrt(grid.ds * grid.dt)
    values = np.zeros(grid.shape)
    values[1:, 1:] = np.cumsum(np.cumsum(cells, axis=0), axis=1)
    return SheetField(grid, values)


def vertical_slice(sheet: SheetField, i: int) -> np.ndarray:
    """The path ``t -> B(i*ds, t)`` at the grid times."""
    if not 0 <= i <= sheet.grid.n_s:
        raise IndexError(f"column {i} outside [0, {sheet.grid.n_s}]")
    return sheet.values[i, :].copy()


def horizontal_slice(sheet: SheetField, j: int) -> np.ndarray:
    """The path ``s -> B(s, j*dt)`` at the grid abscissae."""
    if not 0 <= j <= sheet.grid.n_t:
        raise IndexError(f"row {j} outside [0, {sheet.grid.n_t}]")
    return sheet.values[:, j].copy()


def sheet_to_csv(sheet: SheetField, path=None) -> str:
    """Write ``s,t,value`` rows ordered by ``t`` then ``s``.

    Returns the CSV text; also writes it to ``path`` when given.
    """
    grid = sheet.grid
    s = grid.s_values()
    buf = io.StringIO()
    buf.write("s,t,value\n")
    for j, t in enumerate(grid.t_values()):
        for i in range(grid.n_s + 1):
            buf.write(f"{s[i]:.17g},{t:.17g},{sheet.values[i, j]:.17g}\n")
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text
