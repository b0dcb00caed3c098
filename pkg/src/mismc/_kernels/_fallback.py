"""Pure-numpy implementations of the hot kernels.

Selected at import time when the compiled extension is unavailable or
MISMC_PURE_PYTHON=1.  Must match mismc._kernels._core numerically.
"""
from __future__ import annotations

import numpy as np


def thomas_solve(lower, diag, upper, rhs):
    """Solve a tridiagonal system (subdiagonal, diagonal, superdiagonal)."""
    lower = np.asarray(lower, dtype=np.float64)
    diag = np.asarray(diag, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    rhs = np.asarray(rhs, dtype=np.float64)
    n = diag.shape[0]
    cp = np.empty(n)
    dp = np.empty(n)
    cp[0] = upper[0] / diag[0] if n > 1 else 0.0
    dp[0] = rhs[0] / diag[0]
    for i in range(1, n):
        m = diag[i] - lower[i - 1] * cp[i - 1]
        if i < n - 1:
            cp[i] = upper[i] / m
        dp[i] = (rhs[i] - lower[i - 1] * dp[i - 1]) / m
    x = np.empty(n)
    x[n - 1] = dp[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


def _csr_matvec(n, indptr, indices, data, v):
    # reduceat handles our matrices (no empty rows in an SPD stiffness matrix)
    return np.add.reduceat(data * v[indices], indptr[:-1])


def csr_cg(indptr, indices, data, b, rtol, maxiter):
    """Jacobi-preconditioned CG for an SPD CSR system, zero initial guess."""
    indptr = np.asarray(indptr)
    indices = np.asarray(indices)
    data = np.asarray(data, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n = b.shape[0]
    x = np.zeros(n)
    bnorm2 = float(b @ b)
    if bnorm2 == 0.0:
        return x, 0, True

    dinv = np.ones(n)
    for i in range(n):
        row = slice(indptr[i], indptr[i + 1])
        hits = np.nonzero(indices[row] == i)[0]
        if hits.size and data[indptr[i] + hits[0]] != 0.0:
            dinv[i] = 1.0 / data[indptr[i] + hits[0]]

    r = b.copy()
    z = dinv * r
    p = z.copy()
    rz = float(r @ z)
    tol2 = rtol * rtol * bnorm2
    for it in range(maxiter):
        if float(r @ r) <= tol2:
            return x, it, True
        Ap = _csr_matvec(n, indptr, indices, data, p)
        alpha = rz / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        z = dinv * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, maxiter, float(r @ r) <= tol2
