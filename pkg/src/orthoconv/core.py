"""Layer architectures, kernel tensors, existence tests and explicit orthogonal kernels."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadDimensionality,
    EvenKernel,
    NonPositiveDim,
    NoOrthogonalLayer,
    ShapeMismatch,
)


class Case(str, enum.Enum):
    RO = "RO"
    CO = "CO"
    SQUARE = "Square"


class PaddingMode(str, enum.Enum):
    CIRCULAR = "circular"
    VALID = "valid"
    SAME_ZERO = "same_zero"


@dataclass(frozen=True)
class Architecture:
    """A convolutional layer shape: ``M`` outputs, ``C`` inputs, ``k``-wide kernels, stride ``S``."""

    d: int
    M: int
    C: int
    k: int
    S: int

    @property
    def r(self) -> int:
        return (self.k - 1) // 2

    @property
    def P(self) -> int:
        """Zero padding of the self-correlation: the largest multiple of S below k."""
        return ((self.k - 1) // self.S) * self.S

    @property
    def corr_extent(self) -> int:
        return 2 * self.P // self.S + 1

    @property
    def kernel_shape(self) -> tuple[int, ...]:
        return (self.M, self.C) + (self.k,) * self.d

    @property
    def upsampled_channels(self) -> int:
        """C * S**d, the row/column crossover point between the RO and CO cases."""
        return self.C * self.S**self.d

    def as_dict(self) -> dict:
        return {"d": self.d, "M": self.M, "C": self.C, "k": self.k, "S": self.S}


def validate_architecture(arch: Architecture) -> None:
    if arch.d not in (1, 2):
        raise BadDimensionality(f"d must be 1 or 2, got {arch.d}")
    for name in ("M", "C", "k", "S"):
        value = getattr(arch, name)
        if not isinstance(value, (int, np.integer)) or value < 1:
            raise NonPositiveDim(f"{name} must be a positive integer, got {value!r}")
    if arch.k % 2 == 0:
        raise EvenKernel(f"kernel size must be odd, got k={arch.k}")


def case_of(arch: Architecture) -> Case:
    validate_architecture(arch)
    cs = arch.upsampled_channels
    if arch.M < cs:
        return Case.RO
    if arch.M > cs:
        return Case.CO
    return Case.SQUARE


def exists_orthogonal(arch: Architecture) -> bool:
    """Whether some kernel makes the circular layer orthogonal (for any N with S*N >= k)."""
    case = case_of(arch)
    if case is Case.CO:
        return arch.S <= arch.k
    # For the square case M <= C k^d is equivalent to S <= k.
    return arch.M <= arch.C * arch.k**arch.d


@dataclass
class KernelTensor:
    arch: Architecture
    data: np.ndarray

    def __post_init__(self):
        validate_architecture(self.arch)
        data = np.array(self.data, dtype=np.float64)
        if data.shape != self.arch.kernel_shape:
            raise ShapeMismatch(
                f"kernel data has shape {data.shape}, architecture needs {self.arch.kernel_shape}"
            )
        if not np.all(np.isfinite(data)):
            raise ShapeMismatch("kernel data contains NaN or Inf")
        self.data = data

    def with_data(self, data: np.ndarray) -> "KernelTensor":
        return KernelTensor(self.arch, data)

    def to_dict(self) -> dict:
        out = self.arch.as_dict()
        out["data"] = self.data.ravel().tolist()
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "KernelTensor":
        try:
            arch = Architecture(*(int(doc[key]) for key in ("d", "M", "C", "k", "S")))
            flat = np.asarray(doc["data"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise ShapeMismatch(f"malformed kernel document: {exc}") from exc
        validate_architecture(arch)
        if flat.ndim != 1 or flat.size != int(np.prod(arch.kernel_shape)):
            raise ShapeMismatch(
                f"kernel document holds {flat.size} values, architecture needs "
                f"{int(np.prod(arch.kernel_shape))}"
            )
        return cls(arch, flat.reshape(arch.kernel_shape))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "KernelTensor":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _basis_position(index: int, width: int, d: int) -> tuple[int, ...]:
    # Row-major enumeration of [0, width-1]^d: index -> (index mod width, index div width).
    if d == 1:
        return (index,)
    return (index % width, index // width)


def construct_orthogonal(arch: Architecture) -> KernelTensor:
    """Explicit kernel whose circular layer matrix is orthogonal.

    Output channel ``l*C + c`` receives the ``l``-th canonical basis kernel on
    input channel ``c``; basis positions are drawn from ``[0, min(k, S) - 1]^d``.
    In the RO case every output channel is filled, in the CO case only the
    first ``C * S**d`` ones and the rest stay zero.
    """
    if not exists_orthogonal(arch):
        raise NoOrthogonalLayer(f"no orthogonal convolutional layer exists for {arch}")
    width = min(arch.k, arch.S)
    data = np.zeros(arch.kernel_shape)
    filled = min(arch.M, arch.C * width**arch.d)
    for out_channel in range(filled):
        group, in_channel = divmod(out_channel, arch.C)
        data[(out_channel, in_channel) + _basis_position(group, width, arch.d)] = 1.0
    return KernelTensor(arch, data)


def glorot_bound(arch: Architecture) -> float:
    receptive = arch.k**arch.d
    return float(np.sqrt(6.0 / (arch.C * receptive + arch.M * receptive)))


def glorot_uniform_init(arch: Architecture, seed: int) -> KernelTensor:
    validate_architecture(arch)
    rng = np.random.default_rng(seed)
    bound = glorot_bound(arch)
    return KernelTensor(arch, rng.uniform(-bound, bound, size=arch.kernel_shape))
