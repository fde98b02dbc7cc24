"""Spectral-measure experiments shared by the command line and the tests."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ensemble import EnsembleConfig, map_replicas, summarize
from .errors import ConfigurationError
from .limit_law import StieltjesEvaluator, free_convolution_measure, rescaled_semicircle
from .matrix_field import SymmetricMatrixField, build_matrix_field
from .measures import EmpiricalMeasure, empirical_from_spectrum, wasserstein1
from .sheet import GridSpec

__all__ = [
    "INITIAL_KINDS",
    "initial_matrix",
    "limit_measure",
    "esm_at",
    "W1Row",
    "esm_w1_study",
    "DerivativeTrial",
    "derivative_corpus",
]

INITIAL_KINDS = ("zero", "pm")


def initial_matrix(kind: str, d: int) -> np.ndarray:
    """``zero``: the zero matrix.  ``pm``: ``sqrt(d) diag(+1, ..., -1, ...)``, half each sign."""
    if kind == "zero":
        return np.zeros((d, d))
    if kind == "pm":
        signs = np.where(np.arange(d) < (d + 1) // 2, 1.0, -1.0)
        return math.sqrt(d) * np.diag(signs)
    raise ConfigurationError(f"unknown initial kind {kind!r}; choose from {INITIAL_KINDS}")


def limit_measure(kind: str, s: float, t: float):
    """Large-dimension limit of the rescaled spectral measure for an initial kind."""
    if kind == "zero":
        return rescaled_semicircle(s, t)
    if kind == "pm":
        if s * t == 0:
            return EmpiricalMeasure([-1.0, 1.0])
        return free_convolution_measure(StieltjesEvaluator(s * t, (-1.0, 1.0)))
    raise ConfigurationError(f"unknown initial kind {kind!r}")


def esm_at(field: SymmetricMatrixField, i: int, j: int) -> EmpiricalMeasure:
    """Empirical spectral measure of the rescaled matrix at grid point ``(i, j)``."""
    return empirical_from_spectrum(np.linalg.eigvalsh(field.matrix_at(i, j)), field.d)


@dataclass(frozen=True)
class W1Row:
    d: int
    mean_w1: float
    se: float
    reps: int


def esm_w1_study(dims, reps: int, grid: GridSpec, point: tuple[int, int],
                 initial: str = "zero", workers: int = 1, limit=None,
                 keep_measures: bool = False):
    """Mean W1 distance between the spectral measure and its limit for each dimension.

    Returns ``(rows, measures)``; ``measures`` maps each ``d`` to its
    per-replica empirical measures when ``keep_measures`` is set.
    """
    s, t = grid.point(*point)
    target = limit if limit is not None else limit_measure(initial, s, t)
    rows, kept = [], {}
    for d in dims:
        init = initial_matrix(initial, d)

        def task(r, d=d, init=init):
            field = build_matrix_field(d, grid, init, replica=r)
            mu = esm_at(field, *point)
            return wasserstein1(mu, target), mu

        out = map_replicas(EnsembleConfig(reps, grid.seed, workers), task)
        summary = summarize([o[0] for o in out])
        rows.append(W1Row(d, summary.mean, summary.standard_error, reps))
        if keep_measures:
            kept[d] = [o[1] for o in out]
    return rows, kept


@dataclass(frozen=True)
class DerivativeTrial:
    trial: int
    d: int
    gap_min: float
    grad_rel: float
    hess_rel: float
    laplacian: float
    third_sum: float
    third_forms: float
    inverse_gap: float
    vector_identity: float


def _normwise(analytic: np.ndarray, fd: np.ndarray) -> float:
    top = float(np.max(np.abs(analytic))) if analytic.size else 0.0
    if top == 0.0:
        return float(np.max(np.abs(fd))) if fd.size else 0.0
    return float(np.max(np.abs(analytic - fd))) / top


def derivative_corpus(dims, trials: int, gap_min: float = 0.5, fd_step: float = 1e-5,
                      hess_step: float = 1e-4, seed: int = 0) -> list[DerivativeTrial]:
    """Compare analytic eigenvalue derivatives with finite differences on random matrices.

    ``dims`` is a sequence of dimensions; trial ``k`` draws ``d`` uniformly from it.
    Relative errors are normwise per matrix: ``max |analytic - fd| / max |analytic|``.
    """
    from .spectral import (eig_grad_all, eig_hess_all, eigh, fd_gradient, fd_hessian,
                           identity_residuals, random_gapped_matrix, vector_identity)

    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xD1FF]))
    dims = list(dims)
    out = []
    for k in range(trials):
        d = int(rng.choice(dims))
        x = random_gapped_matrix(rng, d, gap_min)
        dec = eigh(x)
        grad = _normwise(eig_grad_all(dec), fd_gradient(x, fd_step))
        if d > 1:
            hess_fd = fd_hessian(x, hess_step)
            hess = max(_normwise(eig_hess_all(dec, i), hess_fd[i]) for i in range(d))
            rep = identity_residuals(dec)
            vec = max(max(abs(v - 2.0) for v in vector_identity(dec.vectors[:, a], dec.vectors[:, b]))
                      for a in range(d) for b in range(a + 1, d))
            lap, third, forms, inv = rep.laplacian, rep.third_sum, rep.third_forms, rep.inverse_gap
        else:
            hess = lap = third = forms = inv = vec = 0.0
        out.append(DerivativeTrial(k, d, float(dec.gap_min), grad, hess, lap, third,
                                   forms, inv, vec))
    return out
