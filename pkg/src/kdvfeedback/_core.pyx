# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled numerical core.

Same functions and signatures as ``_core_py``. The Picard loop (convection,
Neumann feedback and banded back-substitution) runs entirely in C on top of
LAPACK ``dgbtrs`` from SciPy's Cython bindings.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs
from scipy.linalg.cython_lapack cimport dgbtrs

from ._core_py import band_factor, step_matrix_band, KL, KU  # noqa: F401

cnp.import_array()

NAME = "cython"

STATUS_CONVERGED = 0
STATUS_MAXIT = 1
STATUS_DIVERGED = 2
cdef double STALL = 1e-9


def series_pairs(double complex[:, :] A, double complex[:, :] B):
    """Pairwise outer-product sum ``sum_j (A_j x B_j + A_-j x B_-j)`` in ascending ``|j|``."""
    cdef Py_ssize_t n2 = A.shape[0], N = n2 // 2
    cdef Py_ssize_t nx = A.shape[1], ny = B.shape[1]
    cdef Py_ssize_t p, i, j, jp, jm
    out_arr = np.zeros((nx, ny), dtype=np.complex128)
    cdef double complex[:, ::1] out = out_arr
    cdef double complex ap, am
    cdef double apr, api, amr, ami, bpr, bpi, bmr, bmi
    for p in range(N):
        jp = N + p
        jm = N - 1 - p
        for i in range(nx):
            ap = A[jp, i]
            am = A[jm, i]
            apr = ap.real
            api = ap.imag
            amr = am.real
            ami = am.imag
            for j in range(ny):
                bpr = B[jp, j].real
                bpi = B[jp, j].imag
                bmr = B[jm, j].real
                bmi = B[jm, j].imag
                out[i, j] = out[i, j] + (
                    (apr * bpr - api * bpi) + (amr * bmr - ami * bmi)
                    + 1j * ((apr * bpi + api * bpr) + (amr * bmi + ami * bmr))
                )
    return out_arr


cdef inline void _apply_D(const double* u, Py_ssize_t n, double h, double* out) noexcept nogil:
    cdef Py_ssize_t i
    cdef double h3 = 2.0 * h * h * h
    cdef double h1 = 2.0 * h
    out[1] = (-3.0 * u[0] + 10.0 * u[1] - 12.0 * u[2] + 6.0 * u[3] - u[4]) / h3 + (u[2] - u[0]) / h1
    for i in range(2, n - 1):
        out[i] = (-u[i - 2] + 2.0 * u[i - 1] - 2.0 * u[i + 1] + u[i + 2]) / h3 + (u[i + 1] - u[i - 1]) / h1


cdef inline double _conv(const double* u, Py_ssize_t i, double h) noexcept nogil:
    return (u[i] * (u[i + 1] - u[i - 1]) + (u[i + 1] * u[i + 1] - u[i - 1] * u[i - 1])) / (6.0 * h)


def apply_D(double[::1] u, double h):
    cdef Py_ssize_t n = u.shape[0] - 1
    out_arr = np.zeros(n + 1)
    cdef double[::1] out = out_arr
    _apply_D(&u[0], n, h, &out[0])
    out[n - 1] = 0.0
    return out_arr


def convection(double[::1] u, double h):
    cdef Py_ssize_t n = u.shape[0] - 1, i
    out_arr = np.zeros(n + 1)
    cdef double[::1] out = out_arr
    for i in range(1, n):
        out[i] = _conv(&u[0], i, h)
    return out_arr


def explicit_rhs(double[::1] u, double h, double cdt, bint nonlinear):
    """Known part ``u - cdt (D u + N(u))`` of the theta step on rows ``1..n-2``."""
    cdef Py_ssize_t n = u.shape[0] - 1, i
    r_arr = np.zeros(n + 1)
    cdef double[::1] r = r_arr
    cdef double[::1] du
    if cdt != 0.0:
        du_arr = np.zeros(n + 1)
        du = du_arr
        _apply_D(&u[0], n, h, &du[0])
        for i in range(1, n - 1):
            r[i] = u[i] - cdt * (du[i] + (_conv(&u[0], i, h) if nonlinear else 0.0))
    else:
        for i in range(1, n - 1):
            r[i] = u[i]
    return r_arr


def band_solve(double[::1, :] lu, piv, double[::1] b):
    cdef int n = lu.shape[1], kl = KL, ku = KU, nrhs = 1, ldab = lu.shape[0], info = 0
    cdef int[::1] ipiv = np.asarray(piv, dtype=np.int32) + 1
    x_arr = np.array(b, dtype=np.float64, copy=True)
    cdef double[::1] x = x_arr
    cdef char trans = b'N'
    dgbtrs(&trans, &n, &kl, &ku, &nrhs, &lu[0, 0], &ldab, &ipiv[0], &x[0], &n, &info)
    return x_arr


def picard_step(double[::1, :] lu, piv, double[::1] rhs, double[::1] u_start,
                double[::1] gw, double neumann, double cnl, double h, double tol,
                int maxit, bint nonlinear, double[::1] gaps):
    """Fixed-point solve of one implicit step; see ``_core_py.picard_step``."""
    cdef int n1 = rhs.shape[0], kl = KL, ku = KU, nrhs = 1, ldab = lu.shape[0], info = 0
    cdef Py_ssize_t n = n1 - 1, i
    cdef int m, grow = 0
    cdef double gap, prev = 1e308, big, s, d
    cdef char trans = b'N'
    cdef int[::1] ipiv = np.asarray(piv, dtype=np.int32) + 1
    it_arr = np.array(u_start, dtype=np.float64, copy=True)
    b_arr = np.empty(n1)
    cdef double[::1] it = it_arr
    cdef double[::1] b = b_arr
    with nogil:
        for m in range(maxit):
            for i in range(n1):
                b[i] = rhs[i]
            if nonlinear:
                for i in range(1, n - 1):
                    b[i] -= cnl * _conv(&it[0], i, h)
            s = 0.0
            for i in range(n1):
                s += gw[i] * it[i]
            b[0] = 0.0
            b[n] = 0.0
            b[n - 1] = neumann + s
            dgbtrs(&trans, &n1, &kl, &ku, &nrhs, &lu[0, 0], &ldab, &ipiv[0], &b[0], &n1, &info)
            gap = 0.0
            big = 0.0
            for i in range(n1):
                d = fabs(b[i] - it[i])
                if d > gap:
                    gap = d
                if fabs(b[i]) > big:
                    big = fabs(b[i])
                it[i] = b[i]
            gaps[m] = gap
            if gap <= tol * big or (gap >= prev and gap <= STALL * big):
                with gil:
                    return it_arr, m + 1, STATUS_CONVERGED
            if gap > prev:
                grow += 1
            else:
                grow = 0
            prev = gap
            if grow >= 3:
                with gil:
                    return it_arr, m + 1, STATUS_DIVERGED
    return it_arr, maxit, STATUS_MAXIT
