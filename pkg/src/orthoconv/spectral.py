"""Singular values of circular convolutional layers.

Two routes: the full spectrum through per-frequency SVDs (stride 1 only), and
the extremal pair (sigma_min, sigma_max) through shifted power iteration,
which works for any stride and never forms the layer matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from .core import Architecture, Case, KernelTensor, case_of
from .convmat import apply_layer, apply_layer_adjoint
from .errors import SignalTooSmall, StrideNotOne, ZeroOperator

SHIFT_FACTOR = 1.1
DEFAULT_TOL = 1e-14
DEFAULT_MAX_ITER = 100_000


@dataclass
class SingularSpectrum:
    mode: str  # "Full" or "Extremal"
    N: int
    arch: Architecture
    values: Optional[np.ndarray] = None
    sigma_min: Optional[float] = None
    sigma_max: Optional[float] = None
    iterations_used: int = 0
    converged: bool = True

    def extremes(self) -> tuple[float, float]:
        if self.mode == "Full":
            return float(self.values[-1]), float(self.values[0])
        return self.sigma_min, self.sigma_max

    def to_dict(self) -> dict:
        out = {"mode": self.mode, "N": self.N, "arch": self.arch.as_dict()}
        if self.mode == "Full":
            out["values"] = self.values.tolist()
        else:
            out["sigma_min"] = self.sigma_min
            out["sigma_max"] = self.sigma_max
            out["iterations_used"] = self.iterations_used
        out["converged"] = self.converged
        return out


def singular_values_full(kernel: KernelTensor, N: int) -> SingularSpectrum:
    arch = kernel.arch
    if arch.S != 1:
        raise StrideNotOne("the full spectrum is only available for S=1")
    if N < arch.k:
        raise SignalTooSmall(f"need N >= k, got N={N}, k={arch.k}")
    axes = tuple(range(2, 2 + arch.d))
    transforms = np.fft.fftn(kernel.data, s=(N,) * arch.d, axes=axes)
    # one M x C matrix per frequency bin
    per_bin = np.moveaxis(transforms.reshape(arch.M, arch.C, -1), -1, 0)
    sigma = np.linalg.svd(per_bin, compute_uv=False).ravel()
    return SingularSpectrum("Full", N, arch, values=np.sort(sigma)[::-1])


class PowerIterationResult(NamedTuple):
    value: float
    converged: bool
    iterations: int


def power_iteration(
    operator: Callable[[np.ndarray], np.ndarray],
    dim: int,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    seed=None,
    start: Optional[np.ndarray] = None,
) -> PowerIterationResult:
    """Largest eigenvalue of a symmetric PSD map by Rayleigh quotients.

    Stops when the estimate moves by at most ``tol * max(1, lambda)``.
    """
    if start is None:
        start = np.random.default_rng(seed).standard_normal(dim)
    v = start / np.linalg.norm(start)
    previous = None
    for it in range(1, max_iter + 1):
        w = operator(v)
        value = float(v @ w)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return PowerIterationResult(0.0, True, it)
        v = w / norm
        if previous is not None and abs(value - previous) <= tol * max(1.0, abs(value)):
            return PowerIterationResult(value, True, it)
        previous = value
    return PowerIterationResult(value, False, max_iter)


def gram_operator(kernel: KernelTensor, N: int):
    """The case-appropriate Gram map (K K^T for RO/Square, K^T K for CO) and its dimension."""
    arch = kernel.arch
    if case_of(arch) is Case.CO:
        dim = arch.C * (arch.S * N) ** arch.d
        return (lambda x: apply_layer_adjoint(kernel, N, apply_layer(kernel, N, x))), dim
    dim = arch.M * N**arch.d
    return (lambda y: apply_layer(kernel, N, apply_layer_adjoint(kernel, N, y))), dim


def extremal_singular_values(
    kernel: KernelTensor,
    N: int,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    seed: int = 0,
    shift_factor: float = SHIFT_FACTOR,
) -> SingularSpectrum:
    arch = kernel.arch
    if arch.S * N < arch.k:
        raise SignalTooSmall(f"need S*N >= k, got S*N={arch.S * N}, k={arch.k}")
    gram, dim = gram_operator(kernel, N)
    rng = np.random.default_rng(seed)
    top = power_iteration(gram, dim, tol, max_iter, start=rng.standard_normal(dim))
    if top.value <= 1e-300:
        raise ZeroOperator("the layer matrix is zero")
    big = shift_factor * top.value
    shifted = power_iteration(lambda v: big * v - gram(v), dim, tol, max_iter, start=rng.standard_normal(dim))
    sigma_max = float(np.sqrt(top.value))
    # Both runs give Rayleigh quotients, so the true sigma_min never exceeds the sigma_max estimate.
    sigma_min = min(float(np.sqrt(max(0.0, big - shifted.value))), sigma_max)
    return SingularSpectrum(
        "Extremal",
        N,
        arch,
        sigma_min=sigma_min,
        sigma_max=sigma_max,
        iterations_used=top.iterations + shifted.iterations,
        converged=top.converged and shifted.converged,
    )
