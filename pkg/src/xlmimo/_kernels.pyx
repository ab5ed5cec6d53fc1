# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled estimation-error kernels.

Same contract as ``_kernels_py``. Each (pilot group, SA) pair gets one
in-place complex Cholesky factorisation of Psi; ``trace(R Psi^-1 R)`` is
the squared Frobenius norm of ``chol^-1 R``.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

ctypedef double complex cplx


cdef inline cplx _conj(cplx z) noexcept nogil:
    return z.real - 1j * z.imag


cdef inline double _abs2(cplx z) noexcept nogil:
    return z.real * z.real + z.imag * z.imag


cdef int _cholesky(cplx[:, ::1] A, Py_ssize_t n) noexcept nogil:
    """Lower factor written into the lower triangle of A; returns -1 if not PD."""
    cdef Py_ssize_t i, j, q
    cdef double d
    cdef cplx s
    for j in range(n):
        d = A[j, j].real
        for q in range(j):
            d -= _abs2(A[j, q])
        if d <= 0.0:
            return -1
        d = sqrt(d)
        A[j, j] = d
        for i in range(j + 1, n):
            s = A[i, j]
            for q in range(j):
                s -= A[i, q] * _conj(A[j, q])
            A[i, j] = s / d
    return 0


cdef int _traces_one(
    const cplx[:, :, :, ::1] R,
    const double[::1] p,
    int tau_p,
    double sigma2,
    const cnp.int64_t[::1] pilots,
    double[::1] out,
    cplx[:, ::1] chol,
    cplx[::1] x,
    Py_ssize_t[::1] members,
) noexcept nogil:
    cdef Py_ssize_t K = R.shape[0], L = R.shape[1], N = R.shape[2]
    cdef Py_ssize_t k, l, i, j, c, q, mi, m
    cdef int t
    cdef double quad, tr
    cdef cplx s, acc

    for k in range(K):
        out[k] = 0.0
    for t in range(tau_p):
        m = 0
        for k in range(K):
            if pilots[k] == t:
                members[m] = k
                m += 1
        if m == 0:
            continue
        for l in range(L):
            for i in range(N):
                for j in range(i + 1):
                    acc = 0.0
                    for mi in range(m):
                        k = members[mi]
                        acc = acc + p[k] * R[k, l, i, j]
                    chol[i, j] = tau_p * acc
                chol[i, i] = chol[i, i] + sigma2
            if _cholesky(chol, N) != 0:
                return -1
            for mi in range(m):
                k = members[mi]
                quad = 0.0
                tr = 0.0
                for c in range(N):
                    tr += R[k, l, c, c].real
                    # forward substitution chol x = R[:, c]
                    for i in range(N):
                        s = R[k, l, i, c]
                        for q in range(i):
                            s -= chol[i, q] * x[q]
                        x[i] = s / chol[i, i].real
                        quad += _abs2(x[i])
                out[k] += tr - p[k] * tau_p * quad
    return 0


def ue_error_traces(R, p, int tau_p, double sigma2, pilots):
    cdef const cplx[:, :, :, ::1] Rv = np.ascontiguousarray(R, dtype=np.complex128)
    cdef const double[::1] pv = np.ascontiguousarray(p, dtype=np.float64)
    cdef const cnp.int64_t[::1] tv = np.ascontiguousarray(pilots, dtype=np.int64)
    cdef Py_ssize_t K = Rv.shape[0], N = Rv.shape[2]
    out = np.empty(K)
    cdef double[::1] ov = out
    cdef cplx[:, ::1] chol = np.zeros((N, N), dtype=np.complex128)
    cdef cplx[::1] x = np.zeros(N, dtype=np.complex128)
    cdef Py_ssize_t[::1] members = np.zeros(K, dtype=np.intp)
    cdef int status
    with nogil:
        status = _traces_one(Rv, pv, tau_p, sigma2, tv, ov, chol, x, members)
    if status != 0:
        raise np.linalg.LinAlgError("Psi is not positive definite")
    return out


def assignment_costs(R, p, int tau_p, double sigma2, inv_norm, candidates):
    cdef const cplx[:, :, :, ::1] Rv = np.ascontiguousarray(R, dtype=np.complex128)
    cdef const double[::1] pv = np.ascontiguousarray(p, dtype=np.float64)
    cdef const double[::1] wv = np.ascontiguousarray(inv_norm, dtype=np.float64)
    cdef const cnp.int64_t[:, ::1] cv = np.ascontiguousarray(candidates, dtype=np.int64)
    cdef Py_ssize_t K = Rv.shape[0], N = Rv.shape[2], B = cv.shape[0]
    cdef Py_ssize_t b, k
    costs = np.empty(B)
    cdef double[::1] costv = costs
    cdef double[::1] traces = np.empty(K)
    cdef cplx[:, ::1] chol = np.zeros((N, N), dtype=np.complex128)
    cdef cplx[::1] x = np.zeros(N, dtype=np.complex128)
    cdef Py_ssize_t[::1] members = np.zeros(K, dtype=np.intp)
    cdef double total
    cdef int status = 0
    with nogil:
        for b in range(B):
            status = _traces_one(Rv, pv, tau_p, sigma2, cv[b], traces, chol, x, members)
            if status != 0:
                break
            total = 0.0
            for k in range(K):
                total += wv[k] * traces[k]
            costv[b] = total
    if status != 0:
        raise np.linalg.LinAlgError("Psi is not positive definite")
    return costs
