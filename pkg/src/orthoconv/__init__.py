"""Orthogonal convolutional layers: layer matrices, the L_orth penalty, residual certificates and spectra."""

from .core import (
    Architecture,
    Case,
    KernelTensor,
    PaddingMode,
    case_of,
    construct_orthogonal,
    exists_orthogonal,
    glorot_uniform_init,
    validate_architecture,
)
from .convmat import apply_layer, apply_layer_adjoint, build_layer_matrix
from .errors import ContractViolation, OrthoConvError
from .lorth import correlation_tensor, lorth, lorth_gradient
from .residual import err_frobenius, err_spectral, residual_report, spectral_bounds
from .spectral import extremal_singular_values, singular_values_full

__version__ = "0.1.0"

__all__ = [
    "Architecture",
    "Case",
    "ContractViolation",
    "KernelTensor",
    "OrthoConvError",
    "PaddingMode",
    "apply_layer",
    "apply_layer_adjoint",
    "build_layer_matrix",
    "case_of",
    "construct_orthogonal",
    "correlation_tensor",
    "err_frobenius",
    "err_spectral",
    "exists_orthogonal",
    "extremal_singular_values",
    "glorot_uniform_init",
    "lorth",
    "lorth_gradient",
    "residual_report",
    "singular_values_full",
    "spectral_bounds",
    "validate_architecture",
]
