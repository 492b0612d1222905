# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Sequential cumulative product of per-step transfer matrices.

This is the only inherently sequential inner loop of the fundamental-solution
propagation; everything feeding it is batched numpy. Matrices are small
(2n x 2n with n the state dimension), so a straight triple loop beats BLAS
dispatch overhead by a wide margin.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def cumprod_matmul(cnp.ndarray[cnp.float64_t, ndim=3] steps):
    """Return phi with phi[0] = I and phi[j+1] = steps[j] @ phi[j]."""
    cdef Py_ssize_t m = steps.shape[0]
    cdef Py_ssize_t d = steps.shape[1]
    if steps.shape[2] != d:
        raise ValueError("transfer matrices must be square")
    cdef cnp.ndarray[cnp.float64_t, ndim=3] out = np.empty((m + 1, d, d))
    cdef double[:, :, ::1] s = np.ascontiguousarray(steps)
    cdef double[:, :, ::1] o = out
    cdef Py_ssize_t j, i, k, l
    cdef double acc
    for i in range(d):
        for k in range(d):
            o[0, i, k] = 1.0 if i == k else 0.0
    for j in range(m):
        for i in range(d):
            for k in range(d):
                acc = 0.0
                for l in range(d):
                    acc += s[j, i, l] * o[j, l, k]
                o[j + 1, i, k] = acc
    return out
