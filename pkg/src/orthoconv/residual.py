"""Orthogonality residuals of layer matrices and numerical checks of the stability bounds."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .convmat import MAX_DENSE_ENTRIES, apply_layer, apply_layer_adjoint, build_layer_matrix, layer_matrix_shape
from .core import Architecture, Case, KernelTensor, PaddingMode, case_of, validate_architecture
from .errors import ContractViolation, SignalTooSmall, WrongCase, WrongPadding
from .lorth import lorth, lorth_raw
from .spectral import DEFAULT_MAX_ITER, DEFAULT_TOL, extremal_singular_values

FROBENIUS_GAP_TOL = 1e-9


def _gram(entries: np.ndarray, case: Case) -> np.ndarray:
    # The square case uses the RO form.
    if case is Case.CO:
        return entries.T @ entries
    return entries @ entries.T


def orthogonality_residual(kernel: KernelTensor, N: int, padding=PaddingMode.CIRCULAR,
                           max_entries: int = MAX_DENSE_ENTRIES) -> np.ndarray:
    """Dense ``K K^T - Id`` (RO/Square) or ``K^T K - Id`` (CO)."""
    entries = build_layer_matrix(kernel, N, padding, max_entries).entries
    gram = _gram(entries, case_of(kernel.arch))
    return gram - np.eye(gram.shape[0])


def err_frobenius(kernel: KernelTensor, N: int, max_entries: int = MAX_DENSE_ENTRIES) -> float:
    return float(np.linalg.norm(orthogonality_residual(kernel, N, max_entries=max_entries)))


def err_spectral(kernel: KernelTensor, N: int, method: str = "auto",
                 max_entries: int = MAX_DENSE_ENTRIES, tol: float = DEFAULT_TOL,
                 max_iter: int = DEFAULT_MAX_ITER, seed: int = 0) -> float:
    """Spectral norm of the orthogonality residual.

    ``method`` is ``"dense"`` (symmetric eigendecomposition), ``"matrix_free"``
    (extremal singular values by power iteration) or ``"auto"``, which picks the
    dense path whenever the layer matrix fits under ``max_entries``.
    """
    if method == "auto":
        rows, cols = layer_matrix_shape(kernel, N, PaddingMode.CIRCULAR)
        method = "dense" if rows * cols <= max_entries else "matrix_free"
    if method == "dense":
        eig = np.linalg.eigvalsh(orthogonality_residual(kernel, N, max_entries=max_entries))
        return float(np.max(np.abs(eig)))
    if method != "matrix_free":
        raise ValueError(f"unknown method {method!r}")
    spectrum = extremal_singular_values(kernel, N, tol=tol, max_iter=max_iter, seed=seed)
    return float(max(abs(spectrum.sigma_max**2 - 1.0), abs(spectrum.sigma_min**2 - 1.0)))


def _require_theorem_size(arch: Architecture, N: int):
    if arch.S * N < 2 * arch.k - 1:
        raise SignalTooSmall(f"need S*N >= 2k-1, got S*N={arch.S * N}, 2k-1={2 * arch.k - 1}")


def check_frobenius_identity(kernel: KernelTensor, N: int) -> float:
    """Relative gap between err_F^2 and N^d * L_orth."""
    arch = kernel.arch
    _require_theorem_size(arch, N)
    lhs = err_frobenius(kernel, N) ** 2
    rhs = N**arch.d * lorth_raw(kernel)
    return abs(lhs - rhs) / max(1.0, abs(rhs))


def spectral_bounds(arch: Architecture) -> tuple[float, float]:
    """(alpha_prime, alpha) with alpha_prime * L_orth <= err_s^2 <= alpha * L_orth."""
    case = case_of(arch)
    alpha_prime = 1.0 / min(arch.M, arch.upsampled_channels)
    alpha_ro = float((2 * ((arch.k - 1) // arch.S) + 1) ** arch.d * arch.M)
    alpha_co = float((2 * arch.k - 1) ** arch.d * arch.C)
    if case is Case.RO:
        alpha = alpha_ro
    elif case is Case.CO:
        alpha = alpha_co
    else:
        alpha = min(alpha_ro, alpha_co)
    return alpha_prime, alpha


def _sandwich(lorth_value: float, err_s: float, arch: Architecture) -> bool:
    alpha_prime, alpha = spectral_bounds(arch)
    slack = 1e-9 * (1.0 + alpha * lorth_value)
    return alpha_prime * lorth_value - slack <= err_s**2 <= alpha * lorth_value + slack


def check_spectral_sandwich(kernel: KernelTensor, N: int) -> bool:
    _require_theorem_size(kernel.arch, N)
    return _sandwich(lorth_raw(kernel), err_spectral(kernel, N), kernel.arch)


def scale_err_frobenius(err_f: float, N: int, N_prime: int, d: int) -> float:
    """err_F at size N' from its value at size N (it grows like sqrt(N'^d / N^d))."""
    return float(err_f * np.sqrt((N_prime / N) ** d))


def _unit_rows(rng, count: int, dim: int) -> np.ndarray:
    v = rng.standard_normal((count, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def aip_check(kernel: KernelTensor, N: int, sample_count: int = 100, seed: int = 0,
              epsilon: Optional[float] = None) -> tuple[float, float]:
    """Sample the approximate isometry inequalities with epsilon = err_s.

    Returns ``(epsilon, worst_violation)`` where the violation is the largest
    amount by which any sampled squared norm leaves its allowed interval.
    """
    arch = kernel.arch
    if arch.S * N < arch.k:
        raise SignalTooSmall(f"need S*N >= k, got S*N={arch.S * N}, k={arch.k}")
    eps = err_spectral(kernel, N) if epsilon is None else epsilon
    case = case_of(arch)
    rows, cols = layer_matrix_shape(kernel, N, PaddingMode.CIRCULAR)
    rng = np.random.default_rng(seed)
    # Lower bounds apply to K x in the CO case and to K^T y in the RO case; both in the square case.
    x_lower = case is not Case.RO
    y_lower = case is not Case.CO
    worst = 0.0
    for x in _unit_rows(rng, sample_count, cols):
        sq = float(np.sum(apply_layer(kernel, N, x) ** 2))
        worst = max(worst, sq - (1.0 + eps), (1.0 - eps) - sq if x_lower else 0.0)
    for y in _unit_rows(rng, sample_count, rows):
        sq = float(np.sum(apply_layer_adjoint(kernel, N, y) ** 2))
        worst = max(worst, sq - (1.0 + eps), (1.0 - eps) - sq if y_lower else 0.0)
    return float(eps), float(worst)


def valid_co_obstruction(kernel: KernelTensor, N: int, padding=PaddingMode.VALID) -> float:
    """Certificate that a 'valid' layer in the CO case is never orthogonal.

    Orthogonal columns would force the squared norms of three columns of the
    first input channel (first pixel, last pixel, an interior pixel) to all be 1.
    Those norms are ``s1``, ``s2`` (mass on the two extreme kernel corners) and
    ``s_tot >= s1 + s2``; the returned ``(s1-1)^2 + (s2-1)^2 + (s_tot-1)^2``
    is at least 1/3 for every kernel.
    """
    arch = kernel.arch
    if PaddingMode(padding) is not PaddingMode.VALID:
        raise WrongPadding("the obstruction concerns 'valid' padding")
    if arch.S != 1:
        raise WrongCase("'valid' padding is only analysed without stride")
    if case_of(arch) is Case.RO:
        raise WrongCase("the obstruction only applies in the CO or square case")
    if arch.k < 3:
        raise WrongCase("with k=1 'valid' and circular padding coincide; the obstruction needs k >= 3")
    if N < 2 * arch.k - 1:
        raise SignalTooSmall(f"need N >= 2k-1, got N={N}")
    first = kernel.data[:, 0]
    last = arch.k - 1
    corner_lo = (slice(None),) + (0,) * arch.d
    corner_hi = (slice(None),) + (last,) * arch.d
    s1 = float(np.sum(first[corner_lo] ** 2))
    s2 = float(np.sum(first[corner_hi] ** 2))
    s_tot = float(np.sum(first**2))
    return (s1 - 1.0) ** 2 + (s2 - 1.0) ** 2 + (s_tot - 1.0) ** 2


def same_padding_residual(kernel: KernelTensor, N: int) -> float:
    """Frobenius norm of the orthogonality residual of the zero-padded 'same' layer."""
    return float(np.linalg.norm(orthogonality_residual(kernel, N, PaddingMode.SAME_ZERO)))


def same_padding_structure(kernel: KernelTensor, N: int, tol: float = 1e-8,
                           padding=PaddingMode.SAME_ZERO, energy_factor: float = 10.0) -> float:
    """Kernel energy away from the central tap.

    An orthogonal zero-padded 'same' layer only has central taps. When the
    layer residual is within ``tol`` the energy must stay below
    ``energy_factor * tol``, otherwise :class:`ContractViolation` is raised.
    """
    if PaddingMode(padding) is not PaddingMode.SAME_ZERO:
        raise WrongPadding("the structure result concerns zero-padded 'same' layers")
    arch = kernel.arch
    if arch.S != 1:
        raise WrongCase("'same' padding is only analysed without stride")
    if N < arch.k:
        raise SignalTooSmall(f"need N >= k, got N={N}")
    center = (slice(None), slice(None)) + (arch.r,) * arch.d
    energy = float(np.sum(kernel.data**2) - np.sum(kernel.data[center] ** 2))
    if energy > energy_factor * tol and same_padding_residual(kernel, N) <= tol:
        raise ContractViolation(
            f"'same' layer is orthogonal within {tol} but carries off-center energy {energy}"
        )
    return energy


@dataclass
class ResidualReport:
    arch: Architecture
    N: int
    case: Case
    lorth_value: float
    err_f: float
    err_s: float
    alpha: float
    alpha_prime: float
    frobenius_identity_gap: Optional[float]
    sandwich_satisfied: Optional[bool]
    aip_epsilon: float

    def to_dict(self) -> dict:
        out = asdict(self)
        out["arch"] = self.arch.as_dict()
        out["case"] = self.case.value
        return out


def residual_report(kernel: KernelTensor, N: int, max_entries: int = MAX_DENSE_ENTRIES) -> ResidualReport:
    """Dense residual norms plus the theorem checks (the latter only when S*N >= 2k-1)."""
    arch = kernel.arch
    validate_architecture(arch)
    residual = orthogonality_residual(kernel, N, max_entries=max_entries)
    err_f = float(np.linalg.norm(residual))
    err_s = float(np.max(np.abs(np.linalg.eigvalsh(residual))))
    raw = lorth_raw(kernel)
    alpha_prime, alpha = spectral_bounds(arch)
    gap = sandwich = None
    if arch.S * N >= 2 * arch.k - 1:
        rhs = N**arch.d * raw
        gap = abs(err_f**2 - rhs) / max(1.0, abs(rhs))
        sandwich = _sandwich(raw, err_s, arch)
    return ResidualReport(
        arch=arch,
        N=N,
        case=case_of(arch),
        lorth_value=lorth(kernel),
        err_f=err_f,
        err_s=err_s,
        alpha=alpha,
        alpha_prime=alpha_prime,
        frobenius_identity_gap=gap,
        sandwich_satisfied=sandwich,
        aip_epsilon=err_s,
    )
