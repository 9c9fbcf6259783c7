"""Kernel self-correlation and the L_orth orthogonality penalty with its gradient."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import Architecture, Case, KernelTensor, case_of
from .errors import ShapeMismatch


def kernel_cross_correlation(h, g, P: int, S: int = 1) -> np.ndarray:
    """Strided cross-correlation of ``h`` against ``g`` zero-padded by ``P`` (no kernel flip).

    Entry ``i`` (per axis) is ``sum_j h[j] * gbar[j + S*i]`` where ``gbar`` is ``g``
    padded with ``P`` zeros on each side; the extent is ``floor(2P/S) + 1``.
    """
    h = np.asarray(h, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if h.shape != g.shape or h.ndim not in (1, 2) or len(set(h.shape)) != 1:
        raise ShapeMismatch(f"kernels must share one square extent, got {h.shape} and {g.shape}")
    if P < 0 or S < 1:
        raise ValueError("need P >= 0 and S >= 1")
    k, d = h.shape[0], h.ndim
    extent = 2 * P // S + 1
    out = np.zeros((extent,) * d)
    for idx in itertools.product(range(extent), repeat=d):
        shift = tuple(S * i - P for i in idx)
        h_part, g_part = _overlap(h, g, shift, k)
        out[idx] = np.sum(h_part * g_part) if h_part is not None else 0.0
    return out


def _overlap(h, g, shift, k):
    """Slices of h and g where h[j] meets g[j + shift]."""
    h_sl, g_sl = [], []
    for t in shift:
        lo, hi = max(0, -t), min(k, k - t)
        if lo >= hi:
            return None, None
        h_sl.append(slice(lo, hi))
        g_sl.append(slice(lo + t, hi + t))
    return h[tuple(h_sl)], g[tuple(g_sl)]


@dataclass(frozen=True)
class CorrelationTensor:
    arch: Architecture
    data: np.ndarray

    def target(self) -> np.ndarray:
        return identity_target(self.arch)


def identity_target(arch: Architecture) -> np.ndarray:
    """Zero tensor with the M x M identity at the central spatial position."""
    target = np.zeros((arch.M, arch.M) + (arch.corr_extent,) * arch.d)
    center = (arch.P // arch.S,) * arch.d
    target[(slice(None), slice(None)) + center] = np.eye(arch.M)
    return target


def _shifted_windows(K: np.ndarray, arch: Architecture) -> np.ndarray:
    """W[l, i, c, a] = K[l, c, a + S*i - P] (zero outside), flattened to (M * E^d, C * k^d)."""
    d, P = arch.d, arch.P
    padded = np.pad(K, [(0, 0), (0, 0)] + [(P, P)] * d)
    spatial = tuple(range(2, 2 + d))
    windows = sliding_window_view(padded, (arch.k,) * d, axis=spatial)
    windows = windows[(slice(None), slice(None)) + (slice(None, None, arch.S),) * d]
    # (l, c, i..., a...) -> (l, i..., c, a...)
    order = (0,) + tuple(range(2, 2 + d)) + (1,) + tuple(range(2 + d, 2 + 2 * d))
    return windows.transpose(order).reshape(arch.M * arch.corr_extent**d, -1)


def _correlate_all(K: np.ndarray, arch: Architecture, windows=None) -> np.ndarray:
    # out[m, l, i...] = sum_c sum_a K[m, c, a] K[l, c, a + S*i - P]
    if windows is None:
        windows = _shifted_windows(K, arch)
    flat = K.reshape(arch.M, -1) @ windows.T
    return flat.reshape((arch.M, arch.M) + (arch.corr_extent,) * arch.d)


def _correlate_fixed_order(K: np.ndarray, arch: Architecture) -> np.ndarray:
    # Same contraction as _correlate_all, but each entry is summed in a fixed order
    # that does not depend on where its rows sit, unlike blocked BLAS products.
    windows = _shifted_windows(K, arch)
    flat = np.einsum("mq,nq->mn", K.reshape(arch.M, -1), windows)
    return flat.reshape((arch.M, arch.M) + (arch.corr_extent,) * arch.d)


def correlation_tensor(kernel: KernelTensor) -> CorrelationTensor:
    return CorrelationTensor(kernel.arch, _correlate_fixed_order(kernel.data, kernel.arch))


def _co_offset(arch: Architecture) -> float:
    return float(arch.M - arch.upsampled_channels) if case_of(arch) is Case.CO else 0.0


def lorth_raw(kernel: KernelTensor) -> float:
    """L_orth before clamping; may dip microscopically below zero in the CO case.

    Entries and the final sum are order-independent, so permuting output
    channels gives a bitwise-identical value.
    """
    arch = kernel.arch
    residual = _correlate_fixed_order(kernel.data, arch) - identity_target(arch)
    return math.fsum((residual**2).ravel()) - _co_offset(arch)


def lorth(kernel: KernelTensor) -> float:
    return max(0.0, lorth_raw(kernel))


def lorth_and_gradient(kernel: KernelTensor) -> tuple[float, np.ndarray]:
    """Raw L_orth and its gradient with respect to the kernel entries.

    With R = CONV(K, K) - I_r0 (symmetric under (m, l, s) -> (l, m, -s)) the
    gradient is 4 * sum_{l, s} R[p, l, s] K[l, c, a + s].
    """
    return value_and_gradient(kernel.data, kernel.arch)


def value_and_gradient(K: np.ndarray, arch: Architecture) -> tuple[float, np.ndarray]:
    """Array-level form of :func:`lorth_and_gradient` for tight optimization loops."""
    windows = _shifted_windows(K, arch)
    residual = _correlate_all(K, arch, windows) - identity_target(arch)
    value = float(np.sum(residual**2)) - _co_offset(arch)
    grad = 4.0 * (residual.reshape(arch.M, -1) @ windows)
    return value, grad.reshape(K.shape)


def lorth_gradient(kernel: KernelTensor) -> KernelTensor:
    return kernel.with_data(lorth_and_gradient(kernel)[1])


def finite_difference_gradient(kernel: KernelTensor, step: float = 1e-5) -> np.ndarray:
    """Central differences of raw L_orth, one coordinate at a time."""
    K = kernel.data
    arch = kernel.arch
    grad = np.empty_like(K)
    flat = K.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        plus, minus = flat.copy(), flat.copy()
        plus[i] += step
        minus[i] -= step
        f_plus = value_and_gradient(plus.reshape(K.shape), arch)[0]
        f_minus = value_and_gradient(minus.reshape(K.shape), arch)[0]
        out[i] = (f_plus - f_minus) / (2.0 * step)
    return grad


def gradient_check(kernel: KernelTensor, step: float = 1e-5) -> tuple[float, float]:
    """(max relative, max absolute) coordinate error of the analytic gradient.

    The relative error divides by the larger of the two magnitudes, so a
    coordinate where both vanish counts as exact.
    """
    analytic = lorth_and_gradient(kernel)[1]
    numeric = finite_difference_gradient(kernel, step)
    diff = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    rel = np.divide(diff, scale, out=np.zeros_like(diff), where=scale > 0)
    return float(rel.max()), float(diff.max())
