# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled pair kernels: the hot inner loop of mining and backward.

Semantics mirror `pairs_np` exactly: sequential accumulation in pair order,
64-bit floats throughout.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def pair_distances_chunk(double[:, ::1] emb, cnp.int64_t[::1] ii, cnp.int64_t[::1] jj):
    """Euclidean distance between rows emb[ii[p]] and emb[jj[p]]."""
    cdef Py_ssize_t npairs = ii.shape[0]
    cdef Py_ssize_t dim = emb.shape[1]
    cdef cnp.ndarray[double, ndim=1] out = np.empty(npairs, dtype=np.float64)
    cdef double[::1] out_v = out
    cdef Py_ssize_t p, t
    cdef double acc, d
    cdef cnp.int64_t a, b
    with nogil:
        for p in range(npairs):
            a = ii[p]
            b = jj[p]
            acc = 0.0
            for t in range(dim):
                d = emb[a, t] - emb[b, t]
                acc += d * d
            out_v[p] = sqrt(acc)
    return out


def scatter_pair_gradients_chunk(
    double[:, ::1] emb,
    cnp.int64_t[::1] ii,
    cnp.int64_t[::1] jj,
    double[::1] scale,
    double[:, ::1] out,
):
    """Accumulate scale[p] * (emb[ii[p]] - emb[jj[p]]) into out rows ii/jj."""
    cdef Py_ssize_t npairs = ii.shape[0]
    cdef Py_ssize_t dim = emb.shape[1]
    cdef Py_ssize_t p, t
    cdef double s, g
    cdef cnp.int64_t a, b
    with nogil:
        for p in range(npairs):
            a = ii[p]
            b = jj[p]
            s = scale[p]
            for t in range(dim):
                g = s * (emb[a, t] - emb[b, t])
                out[a, t] += g
                out[b, t] -= g
