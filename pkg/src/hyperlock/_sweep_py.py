"""Pure numpy characteristic sweeps (fallback for the compiled kernel)."""
import numpy as np


def cumulative(f, starts, weights, h, base):
    """Integral of nodal data from the base node (0 or last) along axis -2."""
    f = np.asarray(f, dtype=float)
    q = weights.shape[1]
    cells = weights[:, 0, None] * f[..., starts, :]
    for m in range(1, q):
        cells += weights[:, m, None] * f[..., starts + m, :]
    cells *= h
    out = np.zeros_like(f)
    if base == 0:
        np.cumsum(cells, axis=-2, out=out[..., 1:, :])
    else:
        out[..., :-1, :] = -np.cumsum(cells[..., ::-1, :], axis=-2)[..., ::-1, :]
    return out


def char_sweep(f, expg, starts, weights, h, base):
    """exp(-G(x)) * int_{base}^{x} exp(G(y)) f(y) dy along axis -2."""
    return cumulative(f * expg, starts, weights, h, base) / expg
