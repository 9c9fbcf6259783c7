"""Dense layer transform matrices and matrix-free application of a convolutional layer.

Vectorization convention: channel-major, then row-major inside each channel.
An input ``X`` of shape ``(C, n, n)`` is flattened as ``X.reshape(-1)``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import KernelTensor, PaddingMode
from .errors import (
    DimensionMismatch,
    EmptyVector,
    KernelTooLarge,
    MatrixTooLarge,
    SignalTooSmall,
    UnsupportedStride,
)

MAX_DENSE_ENTRIES = 10**8


def circulant(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise EmptyVector("circulant needs a non-empty vector")
    n = x.size
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    return x[idx]


def doubly_block_circulant(x) -> np.ndarray:
    """n^2 x n^2 matrix whose (I, L) block is circulant(x[(I - L) % n])."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != x.shape[1] or x.size == 0:
        raise EmptyVector("doubly_block_circulant needs a non-empty square matrix")
    n = x.shape[0]
    diff = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    # entry[(I, J), (L, Q)] = x[(I - L) % n, (J - Q) % n]
    block = x[diff[:, None, :, None], diff[None, :, None, :]]
    return block.reshape(n * n, n * n)


def embed_kernel(h, n: int) -> np.ndarray:
    """Place kernel ``h`` (extent k = 2r+1 per axis) so that index i holds h[r - i], mod n."""
    h = np.asarray(h, dtype=np.float64)
    k = h.shape[0]
    if n < k:
        raise KernelTooLarge(f"cannot embed a kernel of size {k} in length {n}")
    r = (k - 1) // 2
    pos = (r - np.arange(k)) % n
    out = np.zeros((n,) * h.ndim)
    if h.ndim == 1:
        out[pos] = h
    else:
        out[np.ix_(pos, pos)] = h
    return out


def sampling_matrix(N: int, S: int, d: int = 1) -> np.ndarray:
    if d == 1:
        out = np.zeros((N, S * N))
        out[np.arange(N), S * np.arange(N)] = 1.0
        return out
    n = S * N
    out = np.zeros((N * N, n * n))
    i, j = np.divmod(np.arange(N * N), N)
    out[np.arange(N * N), (S * i) * n + S * j] = 1.0
    return out


@dataclass(frozen=True)
class LayerMatrix:
    arch: object
    N: int
    padding: PaddingMode
    entries: np.ndarray

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]

    def to_dict(self) -> dict:
        return {
            "rows": self.rows,
            "cols": self.cols,
            "padding": self.padding.value,
            "N": self.N,
            "data": self.entries.ravel().tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @staticmethod
    def entries_from_json(text: str) -> np.ndarray:
        doc = json.loads(text)
        data = np.asarray(doc["data"], dtype=np.float64)
        if data.size != doc["rows"] * doc["cols"]:
            raise DimensionMismatch("matrix dump holds the wrong number of entries")
        return data.reshape(doc["rows"], doc["cols"])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        for row in self.entries:
            writer.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


def _output_size(k: int, N: int, padding: PaddingMode) -> int:
    return N - k + 1 if padding is PaddingMode.VALID else N


def _single_block(h: np.ndarray, N: int, S: int, padding: PaddingMode) -> np.ndarray:
    k = h.shape[0]
    r = (k - 1) // 2
    d = h.ndim
    if padding is PaddingMode.CIRCULAR:
        n = S * N
        p = embed_kernel(h, n)
        base = circulant(p) if d == 1 else doubly_block_circulant(p)
        return sampling_matrix(N, S, d) @ base
    # S == 1 here: output i reads input i + a (valid) or i + a - r (same), a in [0, k).
    n_out = _output_size(k, N, padding)
    shift = 0 if padding is PaddingMode.VALID else -r
    if d == 1:
        return sum(h[a] * _shift_band(n_out, N, a + shift) for a in range(k))
    # 2D: sum over kernel offsets of (row band) kron (column band).
    out = np.zeros((n_out * n_out, N * N))
    for a in range(k):
        for b in range(k):
            if h[a, b] == 0.0:
                continue
            out += h[a, b] * np.kron(_shift_band(n_out, N, a + shift), _shift_band(n_out, N, b + shift))
    return out


def _shift_band(n_out: int, N: int, offset: int) -> np.ndarray:
    band = np.zeros((n_out, N))
    rows = np.arange(n_out)
    cols = rows + offset
    keep = (cols >= 0) & (cols < N)
    band[rows[keep], cols[keep]] = 1.0
    return band


def layer_matrix_shape(kernel: KernelTensor, N: int, padding: PaddingMode) -> tuple[int, int]:
    arch = kernel.arch
    if padding is PaddingMode.CIRCULAR:
        return arch.M * N**arch.d, arch.C * (arch.S * N) ** arch.d
    n_out = _output_size(arch.k, N, padding)
    return arch.M * n_out**arch.d, arch.C * N**arch.d


def build_layer_matrix(
    kernel: KernelTensor,
    N: int,
    padding: PaddingMode = PaddingMode.CIRCULAR,
    max_entries: int = MAX_DENSE_ENTRIES,
) -> LayerMatrix:
    arch = kernel.arch
    padding = PaddingMode(padding)
    if padding is PaddingMode.CIRCULAR:
        if arch.S * N < arch.k:
            raise SignalTooSmall(f"circular padding needs S*N >= k, got S*N={arch.S * N}, k={arch.k}")
    else:
        if arch.S != 1:
            raise UnsupportedStride(f"{padding.value} padding is only supported with S=1")
        if N < arch.k:
            raise SignalTooSmall(f"{padding.value} padding needs N >= k, got N={N}, k={arch.k}")
    rows, cols = layer_matrix_shape(kernel, N, padding)
    if rows * cols > max_entries:
        raise MatrixTooLarge(f"refusing to materialize a {rows}x{cols} matrix")
    block_rows, block_cols = rows // arch.M, cols // arch.C
    entries = np.zeros((rows, cols))
    for m in range(arch.M):
        for c in range(arch.C):
            entries[m * block_rows:(m + 1) * block_rows, c * block_cols:(c + 1) * block_cols] = (
                _single_block(kernel.data[m, c], N, arch.S, padding)
            )
    entries.setflags(write=False)
    return LayerMatrix(arch, N, padding, entries)


def _check_circular(kernel: KernelTensor, N: int):
    arch = kernel.arch
    if arch.S * N < arch.k:
        raise SignalTooSmall(f"circular padding needs S*N >= k, got S*N={arch.S * N}, k={arch.k}")


def _wrap_windows(z: np.ndarray, k: int, d: int) -> np.ndarray:
    """windows[ch, p..., a...] = z[ch, (p + a - r) % n, ...] for every spatial p and offset a."""
    r = (k - 1) // 2
    padded = np.pad(z, [(0, 0)] + [(r, r)] * d, mode="wrap")
    return sliding_window_view(padded, (k,) * d, axis=tuple(range(1, d + 1)))


def _as_columns(windows: np.ndarray, d: int) -> np.ndarray:
    """(ch, p..., a...) windows -> (ch * k^d, P) matrix with one column per spatial position."""
    ch = windows.shape[0]
    spatial = windows.shape[1:1 + d]
    order = (0,) + tuple(range(1 + d, 1 + 2 * d)) + tuple(range(1, 1 + d))
    return windows.transpose(order).reshape(ch * windows.shape[-1] ** d, int(np.prod(spatial)))


def apply_layer(kernel: KernelTensor, N: int, x) -> np.ndarray:
    """Strided circular convolution of the vectorized input, without forming the matrix."""
    arch = kernel.arch
    _check_circular(kernel, N)
    n = arch.S * N
    x = np.asarray(x, dtype=np.float64)
    if x.size != arch.C * n**arch.d:
        raise DimensionMismatch(f"input has {x.size} entries, layer expects {arch.C * n**arch.d}")
    x = x.reshape((arch.C,) + (n,) * arch.d)
    stride = (slice(None),) + (slice(None, None, arch.S),) * arch.d
    windows = _wrap_windows(x, arch.k, arch.d)[stride]
    return (kernel.data.reshape(arch.M, -1) @ _as_columns(windows, arch.d)).reshape(-1)


def apply_layer_adjoint(kernel: KernelTensor, N: int, y) -> np.ndarray:
    arch = kernel.arch
    _check_circular(kernel, N)
    n = arch.S * N
    y = np.asarray(y, dtype=np.float64)
    if y.size != arch.M * N**arch.d:
        raise DimensionMismatch(f"output has {y.size} entries, layer expects {arch.M * N**arch.d}")
    upsampled = np.zeros((arch.M,) + (n,) * arch.d)
    upsampled[(slice(None),) + (slice(None, None, arch.S),) * arch.d] = y.reshape((arch.M,) + (N,) * arch.d)
    # adjoint = circular correlation of the upsampled output with the spatially flipped kernel
    flipped = kernel.data[(slice(None), slice(None)) + (slice(None, None, -1),) * arch.d]
    flipped = np.swapaxes(flipped, 0, 1).reshape(arch.C, -1)
    return (flipped @ _as_columns(_wrap_windows(upsampled, arch.k, arch.d), arch.d)).reshape(-1)
