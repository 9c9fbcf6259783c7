"""Adam minimization of L_orth, architecture sweeps and singular-value stability across N."""

from __future__ import annotations

import csv
import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import Architecture, Case, KernelTensor, case_of, exists_orthogonal, glorot_uniform_init
from .errors import InvalidRuns, OrthoConvError, SignalTooSmall, WrongCase, ZeroOperator
from .lorth import lorth, value_and_gradient
from .residual import spectral_bounds
from .spectral import extremal_singular_values, singular_values_full

SUCCESS_THRESHOLD = 1e-6
DIAGNOSTIC_TOL = 1e-9
DIAGNOSTIC_MAX_ITER = 2000
SWEEP_HEADER = ["d", "M", "C", "k", "S", "ratio", "lorth_final", "sigma_min", "sigma_max", "success", "seed"]


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 0.01
    steps: int = 3000
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    seed: int = 0
    success_threshold: float = SUCCESS_THRESHOLD
    reference_n: Optional[int] = None  # None: input size 64, i.e. N = 64 // S

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise OrthoConvError("learning_rate must be positive")
        if self.steps < 1:
            raise OrthoConvError("steps must be at least 1")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise OrthoConvError("beta1 and beta2 must lie in [0, 1)")
        if not self.eps_hat > 0:
            raise OrthoConvError("eps_hat must be positive")


class Adam:
    """Bias-corrected Adam on a single array parameter."""

    def __init__(self, shape, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, param: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return param - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def reference_size(arch: Architecture, reference_n: Optional[int] = None) -> int:
    """Channel size for end-of-run diagnostics, raised until S*N >= 2k-1."""
    n = reference_n if reference_n is not None else max(1, 64 // arch.S)
    return max(n, math.ceil((2 * arch.k - 1) / arch.S))


@dataclass
class OptimizationTrace:
    lorth_values: np.ndarray
    kernel: KernelTensor
    sigma_min: Optional[float]
    sigma_max: Optional[float]
    reference_n: int
    success: bool

    @property
    def lorth_final(self) -> float:
        return float(self.lorth_values[-1])

    def to_dict(self, include_trace: bool = False) -> dict:
        out = {
            "arch": self.kernel.arch.as_dict(),
            "lorth_initial": float(self.lorth_values[0]),
            "lorth_final": self.lorth_final,
            "sigma_min": self.sigma_min,
            "sigma_max": self.sigma_max,
            "reference_n": self.reference_n,
            "success": self.success,
        }
        if include_trace:
            out["trace"] = self.lorth_values.tolist()
        return out


def _extremes(kernel: KernelTensor, N: int) -> tuple[Optional[float], Optional[float]]:
    # Exact per-frequency spectrum when S=1; bounded shifted power iteration otherwise.
    if kernel.arch.S == 1:
        return singular_values_full(kernel, N).extremes()
    try:
        spectrum = extremal_singular_values(kernel, N, tol=DIAGNOSTIC_TOL, max_iter=DIAGNOSTIC_MAX_ITER)
    except ZeroOperator:
        return 0.0, 0.0
    return spectrum.sigma_min, spectrum.sigma_max


def minimize_lorth(arch: Architecture, config: OptimizerConfig = OptimizerConfig(),
                   with_spectrum: bool = True) -> OptimizationTrace:
    """Glorot init followed by ``config.steps`` Adam steps on L_orth (no task loss).

    The trace holds ``steps + 1`` raw L_orth values, initial one included.
    """
    kernel = glorot_uniform_init(arch, config.seed)
    params = kernel.data
    adam = Adam(params.shape, config.learning_rate, config.beta1, config.beta2, config.eps_hat)
    values = np.empty(config.steps + 1)
    for step in range(config.steps):
        values[step], grad = value_and_gradient(params, arch)
        params = adam.step(params, grad)
    final = kernel.with_data(params)
    values[-1] = lorth(final)
    n_ref = reference_size(arch, config.reference_n)
    sigma_min = sigma_max = None
    if with_spectrum:
        sigma_min, sigma_max = _extremes(final, n_ref)
    return OptimizationTrace(values, final, sigma_min, sigma_max, n_ref,
                             bool(values[-1] <= config.success_threshold))


def derive_seed(base_seed: int, arch: Architecture) -> int:
    """Independent, order-free seed for one architecture of a sweep."""
    ss = np.random.SeedSequence(entropy=base_seed, spawn_key=(arch.d, arch.M, arch.C, arch.k, arch.S))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


@dataclass
class SweepRow:
    arch: Architecture
    ratio: float
    lorth_final: float
    sigma_min: Optional[float]
    sigma_max: Optional[float]
    success: bool
    seed: int

    def as_csv_row(self) -> list:
        a = self.arch
        return [a.d, a.M, a.C, a.k, a.S, repr(self.ratio), repr(self.lorth_final),
                "" if self.sigma_min is None else repr(self.sigma_min),
                "" if self.sigma_max is None else repr(self.sigma_max),
                int(self.success), self.seed]


@dataclass
class SweepResult:
    rows: list = field(default_factory=list)
    total: int = 0
    excluded: int = 0

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(SWEEP_HEADER)
            for row in self.rows:
                writer.writerow(row.as_csv_row())


def architecture_grid(C_range: Iterable[int], M_range: Iterable[int], S_set: Iterable[int],
                      k_set: Iterable[int], d: int) -> list:
    """Canonical grid order: d, then M, C, k, S ascending."""
    return [Architecture(d, M, C, k, S)
            for M, C, k, S in itertools.product(sorted(M_range), sorted(C_range), sorted(k_set), sorted(S_set))]


def count_eligible(C_range, M_range, S_set, k_set, d: int) -> tuple[int, int]:
    """(eligible, total) counts of the grid, no optimization involved."""
    grid = architecture_grid(C_range, M_range, S_set, k_set, d)
    return sum(exists_orthogonal(a) for a in grid), len(grid)


def _sweep_row(job) -> SweepRow:
    arch, config, spectrum_n = job
    trace = minimize_lorth(arch, config, with_spectrum=False)
    n_ref = reference_size(arch, spectrum_n if spectrum_n is not None else config.reference_n)
    sigma_min, sigma_max = _extremes(trace.kernel, n_ref)
    return SweepRow(arch, arch.M / arch.upsampled_channels, trace.lorth_final,
                    sigma_min, sigma_max, trace.success, config.seed)


def worker_count() -> int:
    env = os.environ.get("ORTHOCONV_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def sweep_architectures(C_range, M_range, S_set, k_set, d: int,
                        config: OptimizerConfig = OptimizerConfig(),
                        success_threshold: Optional[float] = None,
                        spectrum_n: Optional[int] = None,
                        workers: Optional[int] = None) -> SweepResult:
    """Optimize every architecture of the grid that admits an orthogonal layer.

    Each row uses a seed derived from ``config.seed`` and the architecture, so
    the table does not depend on scheduling or on the rest of the grid.
    """
    if success_threshold is not None:
        config = replace(config, success_threshold=success_threshold)
    grid = architecture_grid(C_range, M_range, S_set, k_set, d)
    eligible = [a for a in grid if exists_orthogonal(a)]
    jobs = [(a, replace(config, seed=derive_seed(config.seed, a)), spectrum_n) for a in eligible]
    workers = workers or worker_count()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_row, jobs))
    else:
        rows = [_sweep_row(job) for job in jobs]
    return SweepResult(rows=rows, total=len(grid), excluded=len(grid) - len(eligible))


def repeat_square_case(arch: Architecture, runs: int, config: OptimizerConfig = OptimizerConfig()) -> float:
    """Fraction of independently seeded runs that reach the success threshold."""
    if case_of(arch) is not Case.SQUARE:
        raise WrongCase(f"{arch} is not in the square case M = C*S^d")
    if runs < 1:
        raise InvalidRuns("runs must be at least 1")
    successes = 0
    for run in range(runs):
        trace = minimize_lorth(arch, replace(config, seed=config.seed + run), with_spectrum=False)
        successes += trace.success
    return successes / runs


@dataclass
class StabilityRow:
    N: int
    sigma_min: float
    sigma_max: float
    deviation: float  # max |sigma^2 - 1| over the two extremes
    bound: float  # sqrt(alpha * L_orth), the err_s bound
    within_bound: bool
    converged: bool


def stability_across_n(kernel: KernelTensor, Ns: Sequence[int], tol: float = DIAGNOSTIC_TOL,
                       max_iter: int = 5000, seed: int = 0, slack: float = 1e-6) -> list:
    """Matrix-free extremal singular values at each size.

    Each row is checked against the N-free bound |sigma^2 - 1| <= err_s <= sqrt(alpha * L_orth).
    """
    arch = kernel.arch
    for N in Ns:
        if arch.S * N < 2 * arch.k - 1:
            raise SignalTooSmall(f"N={N} violates S*N >= 2k-1")
    _, alpha = spectral_bounds(arch)
    bound = math.sqrt(alpha * lorth(kernel))
    rows = []
    for N in Ns:
        spectrum = extremal_singular_values(kernel, N, tol=tol, max_iter=max_iter, seed=seed)
        deviation = max(abs(spectrum.sigma_min**2 - 1.0), abs(spectrum.sigma_max**2 - 1.0))
        rows.append(StabilityRow(N, spectrum.sigma_min, spectrum.sigma_max, deviation, bound,
                                 deviation <= bound + slack, spectrum.converged))
    return rows


def write_stability_csv(rows: Sequence[StabilityRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["N", "sigma_min", "sigma_max", "deviation", "bound", "within_bound", "converged"])
        for row in rows:
            writer.writerow([row.N, repr(row.sigma_min), repr(row.sigma_max), repr(row.deviation),
                             repr(row.bound), int(row.within_bound), int(row.converged)])
