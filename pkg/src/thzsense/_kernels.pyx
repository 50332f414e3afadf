# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops.  Signatures mirror ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin

cnp.import_array()


def gain_table(const double[::1] k, const double[::1] x, const double[::1] phase,
               const double[::1] cos_out, double cos_in):
    """``out[i, j] = sum_m exp(1j*(phase[m] + k[i]*x[m]*(cos_out[j] - cos_in)))``."""
    cdef Py_ssize_t K = k.shape[0], T = cos_out.shape[0], N = x.shape[0]
    cdef Py_ssize_t i, j, m
    cdef double w, arg, re, im
    out = np.empty((K, T), dtype=np.complex128)
    cdef double complex[:, ::1] o = out
    with nogil:
        for i in range(K):
            for j in range(T):
                w = k[i] * (cos_out[j] - cos_in)
                re = 0.0
                im = 0.0
                for m in range(N):
                    arg = phase[m] + w * x[m]
                    re = re + cos(arg)
                    im = im + sin(arg)
                o[i, j] = re + 1j * im
    return out


def pair_loss_surface(const double complex[::1] r, const double complex[:, ::1] A,
                      const double complex[:, ::1] B):
    """``out[i, j] = ||r - A[:, i] - B[:, j]||_2^2``."""
    cdef Py_ssize_t K = r.shape[0], Ta = A.shape[1], Tb = B.shape[1]
    cdef Py_ssize_t i, j, n
    cdef double acc
    cdef double complex e
    out = np.empty((Ta, Tb), dtype=np.float64)
    cdef double[:, ::1] o = out
    # column-major copies make the inner reduction contiguous
    cdef double complex[:, ::1] At = np.ascontiguousarray(np.asarray(A).T)
    cdef double complex[:, ::1] Bt = np.ascontiguousarray(np.asarray(B).T)
    cdef double complex[::1] ri = np.empty(K, dtype=np.complex128)
    with nogil:
        for i in range(Ta):
            for n in range(K):
                ri[n] = r[n] - At[i, n]
            for j in range(Tb):
                acc = 0.0
                for n in range(K):
                    e = ri[n] - Bt[j, n]
                    acc = acc + e.real * e.real + e.imag * e.imag
                o[i, j] = acc
    return out
