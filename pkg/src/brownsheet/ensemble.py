"""Replica orchestration with worker-count independent results.

Tasks are pure functions of the replica index.  Results land in an indexed
buffer and every reduction walks that buffer in index order, so the
scheduling never changes an emitted number.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from .errors import BrownSheetError, ConfigurationError

__all__ = [
    "EnsembleConfig",
    "EstimatorSummary",
    "ReplicaDiscarded",
    "ReplicaError",
    "map_replicas",
    "run_ensemble",
    "summarize",
]

log = logging.getLogger(__name__)


class ReplicaDiscarded(Exception):
    """Raised by a task to mark its replica as discarded under the discard policy."""


class ReplicaError(BrownSheetError):
    """A replica task failed; ``replica`` holds its index."""

    def __init__(self, replica: int, cause: BaseException):
        super().__init__(f"replica {replica} failed: {cause!r}")
        self.replica = replica
        self.cause = cause


@dataclass(frozen=True)
class EnsembleConfig:
    reps: int
    root_seed: int = 0
    workers: int = 1
    discard_policy: str = "none"

    def __post_init__(self):
        if int(self.reps) != self.reps or self.reps < 1:
            raise ConfigurationError(f"reps must be a positive integer, got {self.reps}")
        if int(self.workers) != self.workers or self.workers < 1:
            raise ConfigurationError(f"workers must be a positive integer, got {self.workers}")
        if not 0 <= int(self.root_seed) < 2**64:
            raise ConfigurationError("root_seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class EstimatorSummary:
    n_effective: int
    mean: float
    variance: float
    standard_error: float
    discards: int = 0

    @property
    def reps(self) -> int:
        return self.n_effective + self.discards

    def within(self, target: float, n_se: float = 4.0) -> bool:
        """Whether ``target`` lies within ``n_se`` standard errors of the mean."""
        if not math.isfinite(self.standard_error):
            return False
        return abs(self.mean - target) <= n_se * self.standard_error


_DISCARDED = object()


def map_replicas(config: EnsembleConfig, task: Callable[[int], Any]) -> list:
    """Run ``task(r)`` for every replica; return results in replica order.

    Discarded replicas appear as ``None``.  A failing task raises
    :class:`ReplicaError` naming the lowest failing index.
    """
    def guarded(r):
        try:
            return task(r)
        except ReplicaDiscarded:
            return _DISCARDED
        except Exception as exc:  # noqa: BLE001
            return ReplicaError(r, exc)

    if config.workers == 1:
        buffer = [guarded(r) for r in range(config.reps)]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            buffer = list(pool.map(guarded, range(config.reps)))
    for item in buffer:
        if isinstance(item, ReplicaError):
            raise item
    return [None if item is _DISCARDED else item for item in buffer]


def summarize(values: Sequence, discards: int = 0) -> EstimatorSummary:
    """Mean, unbiased variance and standard error, reduced in the given order.

    ``values`` may contain ``None`` entries, which count as discards.
    Vector-valued entries are not accepted; summarize each component.
    """
    kept = [float(v) for v in values if v is not None]
    discards += sum(1 for v in values if v is None)
    n = len(kept)
    if n == 0:
        return EstimatorSummary(0, math.nan, math.nan, math.nan, discards)
    arr = np.array(kept)
    mean = math.fsum(kept) / n
    if n == 1:
        return EstimatorSummary(1, mean, math.nan, math.nan, discards)
    var = math.fsum((arr - mean) ** 2) / (n - 1)
    return EstimatorSummary(n, mean, var, math.sqrt(var / n), discards)


def run_ensemble(config: EnsembleConfig, task: Callable[[int], Any]):
    """Run replicas and summarize.

    Scalar results give one :class:`EstimatorSummary`; tuple or array
    results give a list with one summary per component.
    """
    results = map_replicas(config, task)
    kept = [r for r in results if r is not None]
    discards = len(results) - len(kept)
    if discards:
        log.info("%d of %d replicas discarded", discards, config.reps)
    if kept and np.ndim(kept[0]) > 0:
        cols = np.array(kept, dtype=float)
        return [summarize(cols[:, c].tolist(), discards) for c in range(cols.shape[1])]
    return summarize(kept, discards)
