# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled scatter kernel for normal-ordered monomials on a truncated Fock basis."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def scatter_monomial(double complex[:, ::1] out,
                     const long long[:, ::1] t_idx, const double[:, ::1] t_amp,
                     const long long[:, ::1] s_idx, const double[:, ::1] s_amp,
                     const double complex[:, :, ::1] vals):
    """out[t, s] += vals[u, I, J] * t_amp[u, I] * s_amp[u, J] for valid t, s."""
    cdef Py_ssize_t nu = t_idx.shape[0], ni = t_idx.shape[1], nj = s_idx.shape[1]
    cdef Py_ssize_t u, i, j
    cdef long long t, s
    cdef double a
    for u in range(nu):
        for i in range(ni):
            t = t_idx[u, i]
            if t < 0:
                continue
            a = t_amp[u, i]
            for j in range(nj):
                s = s_idx[u, j]
                if s < 0:
                    continue
                out[t, s] = out[t, s] + vals[u, i, j] * (a * s_amp[u, j])
    return None
