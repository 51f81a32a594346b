"""Uniform-grid helpers: Fourier sampling, x-quadrature and x-differences."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

SQRT2 = np.sqrt(2.0)


def t_grid(n: int) -> np.ndarray:
    return np.arange(n) / n


def modes_to_grid(coef: np.ndarray, n: int) -> np.ndarray:
    """Sample the real trig polynomial with one-sided modes ``coef`` on ``n`` points."""
    m = coef.shape[-1] - 1
    if 2 * m >= n:
        raise ValueError(f"grid of {n} points cannot carry {m} modes")
    full = np.zeros(coef.shape[:-1] + (n // 2 + 1,), dtype=complex)
    full[..., : m + 1] = coef * n
    return np.fft.irfft(full, n, axis=-1)


def grid_to_modes(values: np.ndarray, m: int) -> np.ndarray:
    n = values.shape[-1]
    if 2 * m >= n:
        raise ValueError(f"{n} samples cannot resolve {m} modes")
    coef = np.fft.rfft(values, axis=-1)[..., : m + 1] / n
    coef[..., 0] = coef[..., 0].real
    return coef


def abs_max(coef: np.ndarray, density: int = 8, polish: int = 3) -> float:
    """``max_t |u(t)|`` over all rows of one-sided modes (..., M+1).

    Samples at ``density * M`` points, then Newton-polishes the best sample
    of every row on ``u' = 0`` so the result does not depend on where the
    grid happens to fall.
    """
    m = coef.shape[-1] - 1
    n = max(density * m, 2 * m + 2)
    rows = coef.reshape(-1, m + 1)
    vals = modes_to_grid(rows, n)
    idx = np.argmax(np.abs(vals), axis=-1)
    best = np.abs(vals[np.arange(rows.shape[0]), idx])
    if m == 0:
        return float(best.max(initial=0.0))
    k = np.arange(m + 1)
    w = np.full(m + 1, 2.0)
    w[0] = 1.0
    c0 = rows * w
    c1 = c0 * (2j * np.pi * k)
    c2 = c1 * (2j * np.pi * k)
    t = idx / n
    h = 1.0 / n
    for _ in range(polish):
        e = np.exp(2j * np.pi * np.multiply.outer(t, k))
        d1 = (c1 * e).real.sum(-1)
        d2 = (c2 * e).real.sum(-1)
        step = np.where(d2 != 0.0, -d1 / np.where(d2 != 0.0, d2, 1.0), 0.0)
        t = t + np.clip(step, -h, h)
    e = np.exp(2j * np.pi * np.multiply.outer(t, k))
    polished = np.abs((c0 * e).real.sum(-1))
    return float(np.maximum(best, polished).max(initial=0.0))


def shift_factors(m: int, phi) -> np.ndarray:
    """Multipliers turning modes of u(t) into modes of u(t + phi)."""
    k = np.arange(m + 1)
    return np.exp(2j * np.pi * np.multiply.outer(np.asarray(phi, dtype=float), k))


def pack(coef: np.ndarray) -> np.ndarray:
    """Real vector whose Euclidean norm is the L2(0,1) norm in t."""
    re = coef.real
    im = coef.imag
    out = np.empty(coef.shape[:-1] + (2 * coef.shape[-1] - 1,))
    out[..., 0] = re[..., 0]
    out[..., 1::2] = SQRT2 * re[..., 1:]
    out[..., 2::2] = SQRT2 * im[..., 1:]
    return out


def unpack(vec: np.ndarray) -> np.ndarray:
    m = (vec.shape[-1] - 1) // 2
    coef = np.empty(vec.shape[:-1] + (m + 1,), dtype=complex)
    coef[..., 0] = vec[..., 0]
    coef[..., 1:] = (vec[..., 1::2] + 1j * vec[..., 2::2]) / SQRT2
    return coef


def correlate_modes(a: np.ndarray, b: np.ndarray, axis_sum=None) -> np.ndarray:
    """One-sided modes of c(phi) = int a(t - phi) b(t) dt."""
    c = a * np.conj(b)
    if axis_sum is not None:
        c = c.sum(axis=axis_sum)
    return c


def trig_eval(coef: np.ndarray, phi) -> np.ndarray:
    """Evaluate c(phi) = Re(c_0) + 2 Re sum_k c_k exp(-2 pi i k phi)."""
    phi = np.asarray(phi, dtype=float)
    k = np.arange(coef.shape[-1])
    e = np.exp(-2j * np.pi * np.multiply.outer(phi, k))
    w = np.full(k.shape, 2.0)
    w[0] = 1.0
    return (e * (w * coef)).real.sum(axis=-1)


def trig_eval_deriv(coef: np.ndarray, phi) -> np.ndarray:
    k = np.arange(coef.shape[-1])
    return trig_eval(coef * (-2j * np.pi * k), phi)


def _lagrange_integrals(nodes: np.ndarray, lo: float, hi: float) -> np.ndarray:
    q = len(nodes)
    vander = np.vander(nodes, q, increasing=True)
    powers = np.arange(1, q + 1)
    moments = (hi**powers - lo**powers) / powers
    return np.linalg.solve(vander.T, moments)


@lru_cache(maxsize=64)
def cell_rule(n: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Stencil starts and weights (unit spacing) for each cell integral."""
    q = min(order, n)
    starts = np.empty(n - 1, dtype=np.int64)
    weights = np.empty((n - 1, q))
    for k in range(n - 1):
        s = min(max(k - (q // 2 - 1), 0), n - q)
        starts[k] = s
        weights[k] = _lagrange_integrals(np.arange(q, dtype=float), k - s, k - s + 1)
    starts.flags.writeable = False
    weights.flags.writeable = False
    return starts, weights


@lru_cache(maxsize=64)
def node_weights(n: int, order: int) -> np.ndarray:
    """Composite weights on [0, 1] for n uniform nodes."""
    starts, weights = cell_rule(n, order)
    w = np.zeros(n)
    for k in range(n - 1):
        w[starts[k] : starts[k] + weights.shape[1]] += weights[k]
    w /= n - 1
    w.flags.writeable = False
    return w


def _deriv_weights(nodes: np.ndarray, x0: float) -> np.ndarray:
    q = len(nodes)
    vander = np.vander(nodes - x0, q, increasing=True)
    rhs = np.zeros(q)
    rhs[1] = 1.0
    return np.linalg.solve(vander.T, rhs)


DIFF_ORDER = 8


@lru_cache(maxsize=64)
def diff_matrix(n: int, order: int = DIFF_ORDER) -> np.ndarray:
    """First-derivative matrix of the given (even) order on n uniform nodes of [0, 1].

    Central stencils inside, one-sided stencils of the same width at the ends.
    """
    width = order + 1
    if n < width:
        raise ValueError(f"at least {width} nodes are needed for order-{order} differences")
    h = 1.0 / (n - 1)
    d = np.zeros((n, n))
    half = order // 2
    for i in range(n):
        s = min(max(i - half, 0), n - width)
        d[i, s : s + width] = _deriv_weights(np.arange(s, s + width, dtype=float), float(i))
    d /= h
    d.flags.writeable = False
    return d


def diff_x(values: np.ndarray, axis: int = -2, order: int = DIFF_ORDER) -> np.ndarray:
    """Finite-difference x-derivative of nodal data along ``axis``."""
    values = np.moveaxis(values, axis, -1)
    out = values @ diff_matrix(values.shape[-1], order).T
    return np.moveaxis(out, -1, axis)


@lru_cache(maxsize=64)
def cumulative_matrix(n: int, order: int) -> np.ndarray:
    """Matrix of ``f -> int_0^{x_i} f`` on n uniform nodes of [0, 1]."""
    starts, weights = cell_rule(n, order)
    q = weights.shape[1]
    mat = np.zeros((n, n))
    for k in range(n - 1):
        mat[k + 1] = mat[k]
        mat[k + 1, starts[k] : starts[k] + q] += weights[k]
    mat /= n - 1
    mat.flags.writeable = False
    return mat
