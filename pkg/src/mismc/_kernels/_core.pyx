# Compiled hot kernels: tridiagonal (Thomas) solve and Jacobi-preconditioned
# conjugate gradients on a CSR matrix.  Semantics must match
# mismc._kernels._fallback exactly.

import numpy as np

cimport numpy as cnp

cnp.import_array()


def thomas_solve(double[::1] lower, double[::1] diag, double[::1] upper,
                 double[::1] rhs):
    """Solve a tridiagonal system in O(n).

    lower has length n-1 (subdiagonal), diag length n, upper length n-1.
    Returns a fresh solution array; inputs are not modified.
    """
    cdef Py_ssize_t n = diag.shape[0]
    cdef cnp.ndarray[double, ndim=1] x = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] cp = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] dp = np.empty(n, dtype=np.float64)
    cdef double[::1] xv = x, cpv = cp, dpv = dp
    cdef Py_ssize_t i
    cdef double m

    cpv[0] = upper[0] / diag[0] if n > 1 else 0.0
    dpv[0] = rhs[0] / diag[0]
    for i in range(1, n):
        m = diag[i] - lower[i - 1] * cpv[i - 1]
        if i < n - 1:
            cpv[i] = upper[i] / m
        dpv[i] = (rhs[i] - lower[i - 1] * dpv[i - 1]) / m
    xv[n - 1] = dpv[n - 1]
    for i in range(n - 2, -1, -1):
        xv[i] = dpv[i] - cpv[i] * xv[i + 1]
    return x


cdef void _csr_matvec(Py_ssize_t n, int[::1] indptr, int[::1] indices,
                      double[::1] data, double[::1] v, double[::1] out) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double acc
    for i in range(n):
        acc = 0.0
        for j in range(indptr[i], indptr[i + 1]):
            acc += data[j] * v[indices[j]]
        out[i] = acc


def csr_cg(int[::1] indptr, int[::1] indices, double[::1] data,
           double[::1] b, double rtol, Py_ssize_t maxiter):
    """Jacobi-preconditioned CG for an SPD CSR system, zero initial guess.

    Returns (x, iterations, converged).  Convergence is measured by the
    2-norm of the residual relative to |b|.
    """
    cdef Py_ssize_t n = b.shape[0]
    cdef cnp.ndarray[double, ndim=1] x = np.zeros(n, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] r = np.array(b, dtype=np.float64, copy=True)
    cdef cnp.ndarray[double, ndim=1] z = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] p = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] Ap = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] dinv = np.empty(n, dtype=np.float64)
    cdef double[::1] xv = x, rv = r, zv = z, pv = p, Apv = Ap, dv = dinv
    cdef Py_ssize_t i, j, it
    cdef double bnorm2 = 0.0, rz, rz_new, pAp, alpha, beta, rnorm2

    for i in range(n):
        bnorm2 += b[i] * b[i]
        dv[i] = 1.0
    if bnorm2 == 0.0:
        return x, 0, True
    for i in range(n):
        for j in range(indptr[i], indptr[i + 1]):
            if indices[j] == i and data[j] != 0.0:
                dv[i] = 1.0 / data[j]
                break

    rz = 0.0
    for i in range(n):
        zv[i] = dv[i] * rv[i]
        pv[i] = zv[i]
        rz += rv[i] * zv[i]

    cdef double tol2 = rtol * rtol * bnorm2
    for it in range(maxiter):
        rnorm2 = 0.0
        for i in range(n):
            rnorm2 += rv[i] * rv[i]
        if rnorm2 <= tol2:
            return x, it, True
        _csr_matvec(n, indptr, indices, data, pv, Apv)
        pAp = 0.0
        for i in range(n):
            pAp += pv[i] * Apv[i]
        alpha = rz / pAp
        for i in range(n):
            xv[i] += alpha * pv[i]
            rv[i] -= alpha * Apv[i]
        rz_new = 0.0
        for i in range(n):
            zv[i] = dv[i] * rv[i]
            rz_new += rv[i] * zv[i]
        beta = rz_new / rz
        rz = rz_new
        for i in range(n):
            pv[i] = zv[i] + beta * pv[i]

    rnorm2 = 0.0
    for i in range(n):
        rnorm2 += rv[i] * rv[i]
    return x, maxiter, rnorm2 <= tol2
