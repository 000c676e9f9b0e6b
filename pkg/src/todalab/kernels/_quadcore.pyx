# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of the quadrature node-evaluation kernel (real coefficients).

Same contract as ``_quadcore_py.quad_nodes_eval``; loops are fused so no
node-sized temporaries are allocated and gcc can vectorize the exp calls.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, INFINITY

cnp.import_array()


def quad_nodes_eval(double[::1] ls0, double[:, ::1] lsv, double[:, ::1] zb,
                    double[:, :, ::1] zA, double[:, ::1] K, double[::1] logmax,
                    double[:, ::1] xi, double[::1] wq, unsigned char[::1] bflag):
    cdef Py_ssize_t S = ls0.shape[0]
    cdef Py_ssize_t d = lsv.shape[1]
    cdef Py_ssize_t m = zb.shape[1]
    cdef Py_ssize_t nq = xi.shape[0]
    cdef Py_ssize_t s, q, j, k
    cdef double lin, pot, z, expo

    acc_arr = np.zeros(S, dtype=np.float64)
    bmax_arr = np.full(S, -INFINITY, dtype=np.float64)
    cdef double[::1] acc = acc_arr
    cdef double[::1] bmax = bmax_arr

    for s in range(S):
        for q in range(nq):
            lin = ls0[s]
            for k in range(d):
                lin += lsv[s, k] * xi[q, k]
            pot = 0.0
            for j in range(m):
                z = zb[s, j]
                for k in range(d):
                    z += zA[s, j, k] * xi[q, k]
                pot += K[s, j] * exp(z)
            expo = lin - pot - logmax[s]
            acc[s] += wq[q] * exp(expo)
            if bflag[q] and expo > bmax[s]:
                bmax[s] = expo
    return acc_arr, bmax_arr
