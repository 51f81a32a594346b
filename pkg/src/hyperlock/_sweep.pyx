# cython: language_level=3, cdivision=True
"""Compiled characteristic sweeps over (rows, x, t) arrays."""
cimport cython
import numpy as np
cimport numpy as cnp

cnp.import_array()


@cython.boundscheck(False)
@cython.wraparound(False)
cdef void _sweep_row(const double[:, ::1] f, const double[:, ::1] expg,
                     const long long[::1] starts, const double[:, ::1] w,
                     double h, int base, bint weighted,
                     double[:, ::1] out, double[::1] acc) noexcept nogil:
    cdef Py_ssize_t nx = f.shape[0], nt = f.shape[1], q = w.shape[1]
    cdef Py_ssize_t k, m, i, node, s
    cdef double c, g
    for i in range(nt):
        acc[i] = 0.0
        out[base if base == 0 else nx - 1, i] = 0.0
    if base == 0:
        for k in range(nx - 1):
            s = starts[k]
            for m in range(q):
                c = w[k, m] * h
                node = s + m
                if weighted:
                    for i in range(nt):
                        acc[i] += c * f[node, i] * expg[node, i]
                else:
                    for i in range(nt):
                        acc[i] += c * f[node, i]
            for i in range(nt):
                out[k + 1, i] = acc[i] / expg[k + 1, i] if weighted else acc[i]
    else:
        for k in range(nx - 2, -1, -1):
            s = starts[k]
            for m in range(q):
                c = w[k, m] * h
                node = s + m
                if weighted:
                    for i in range(nt):
                        acc[i] -= c * f[node, i] * expg[node, i]
                else:
                    for i in range(nt):
                        acc[i] -= c * f[node, i]
            for i in range(nt):
                out[k, i] = acc[i] / expg[k, i] if weighted else acc[i]


def _run(f, expg, starts, weights, double h, int base, bint weighted):
    f = np.asarray(f, dtype=np.float64)
    shape = f.shape
    f3 = np.ascontiguousarray(f.reshape((-1,) + shape[-2:]))
    cdef double[:, :, ::1] fv = f3
    cdef double[:, ::1] gv = np.ascontiguousarray(expg if weighted else np.ones(shape[-2:]), dtype=np.float64)
    cdef const long long[::1] sv = np.ascontiguousarray(starts, dtype=np.int64)
    cdef const double[:, ::1] wv = np.ascontiguousarray(weights, dtype=np.float64)
    out = np.empty(f3.shape, dtype=np.float64)
    cdef double[:, :, ::1] ov = out
    cdef double[::1] acc = np.empty(shape[-1], dtype=np.float64)
    cdef Py_ssize_t r
    with nogil:
        for r in range(fv.shape[0]):
            _sweep_row(fv[r], gv, sv, wv, h, base, weighted, ov[r], acc)
    return out.reshape(shape)


def cumulative(f, starts, weights, double h, int base):
    return _run(f, None, starts, weights, h, base, False)


def char_sweep(f, expg, starts, weights, double h, int base):
    return _run(f, expg, starts, weights, h, base, True)
