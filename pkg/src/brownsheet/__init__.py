"""Eigenvalue fields of symmetric matrices driven by Brownian sheets."""
from importlib.metadata import PackageNotFoundError, version as _version

from .errors import (AlignmentError, BrownSheetError, ConditioningError, ConfigurationError,
                     ConvergenceError, DegenerateSpectrumError, DiagnosticError, RegimeError,
                     SingularDriftError, ValidationError)
from .matrix_field import SymmetricMatrixField, build_matrix_field
from .sheet import GridSpec, SheetField, sample_sheet, vertical_slice
from .spectral import GapPolicy, SpectralDecomposition, eigh

try:
    __version__ = _version("brownsheet")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

__all__ = [
    "AlignmentError",
    "BrownSheetError",
    "ConditioningError",
    "ConfigurationError",
    "ConvergenceError",
    "DegenerateSpectrumError",
    "DiagnosticError",
    "GapPolicy",
    "GridSpec",
    "RegimeError",
    "SheetField",
    "SingularDriftError",
    "SpectralDecomposition",
    "SymmetricMatrixField",
    "ValidationError",
    "build_matrix_field",
    "eigh",
    "sample_sheet",
    "vertical_slice",
    "__version__",
]
