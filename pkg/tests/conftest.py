"""Shared test oracles.

Everything here is written from the definitions with plain loops and does not
call into the package's matrix builders, so it can serve as an independent
reference.
"""

import itertools

import numpy as np
import pytest

ACCEPTANCE_LINES = []


def naive_layer_matrix(K, S, N, padding="circular"):
    """Dense layer matrix straight from the per-entry definition.

    Circular: output (m, i) = sum_{c, a} K[m, c, a] x[c, (S*i + a - r) mod S*N].
    Valid:    output (m, i) = sum_{c, a} K[m, c, a] x[c, i + a], i in [0, N-k].
    Same:     output (m, i) = sum_{c, a} K[m, c, a] x[c, i + a - r] (zero outside).
    Indices are channel-major, then row-major over space.
    """
    K = np.asarray(K, dtype=float)
    M, C, k = K.shape[:3]
    d = K.ndim - 2
    r = (k - 1) // 2
    n_in = S * N if padding == "circular" else N
    n_out = N - k + 1 if padding == "valid" else N
    out_pos = list(itertools.product(range(n_out), repeat=d))
    in_index = {p: t for t, p in enumerate(itertools.product(range(n_in), repeat=d))}
    A = np.zeros((M * n_out**d, C * n_in**d))
    for m, c in itertools.product(range(M), range(C)):
        for io, i in enumerate(out_pos):
            row = m * n_out**d + io
            for a in itertools.product(range(k), repeat=d):
                if padding == "circular":
                    j = tuple((S * ii + aa - r) % n_in for ii, aa in zip(i, a))
                elif padding == "valid":
                    j = tuple(ii + aa for ii, aa in zip(i, a))
                else:
                    j = tuple(ii + aa - r for ii, aa in zip(i, a))
                    if any(jj < 0 or jj >= n_in for jj in j):
                        continue
                A[row, c * n_in**d + in_index[j]] += K[(m, c) + a]
    return A


def naive_cross_correlation(h, g, P, S):
    """sum_{i'} h[i'] * gbar[i' + S*i] with gbar = g zero-padded by P per side."""
    h = np.asarray(h, dtype=float)
    g = np.asarray(g, dtype=float)
    d = h.ndim
    gbar = np.pad(g, P)
    extent = 2 * P // S + 1
    out = np.zeros((extent,) * d)
    for i in itertools.product(range(extent), repeat=d):
        total = 0.0
        for ip in itertools.product(range(h.shape[0]), repeat=d):
            total += h[ip] * gbar[tuple(a + S * b for a, b in zip(ip, i))]
        out[i] = total
    return out


def naive_lorth(K, S):
    """L_orth from the definition: residual of the summed correlations minus the CO offset."""
    K = np.asarray(K, dtype=float)
    M, C, k = K.shape[:3]
    d = K.ndim - 2
    P = ((k - 1) // S) * S
    extent = 2 * P // S + 1
    conv = np.zeros((M, M) + (extent,) * d)
    for m, l in itertools.product(range(M), repeat=2):
        for c in range(C):
            conv[m, l] += naive_cross_correlation(K[m, c], K[l, c], P, S)
    center = (P // S,) * d
    for m in range(M):
        conv[(m, m) + center] -= 1.0
    value = float(np.sum(conv**2))
    if M > C * S**d:
        value -= M - C * S**d
    return value


def central_differences(f, x, step=1e-5):
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for idx in np.ndindex(x.shape):
        plus, minus = x.copy(), x.copy()
        plus[idx] += step
        minus[idx] -= step
        grad[idx] = (f(plus) - f(minus)) / (2 * step)
    return grad


def record_acceptance(number, passed, detail):
    ACCEPTANCE_LINES.append((number, "PASS" if passed else "FAIL", detail))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, status, detail in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {detail}")
