# cython: language_level=3
"""Compiled CSR kernels for the hot solver loops.

Two routines dominate run time: the Jacobi-preconditioned conjugate
gradient solve for equilibrium displacements and the projected
Gauss-Seidel sweeps of the phase-field update.  Both are written
against raw CSR arrays so the same call signature works for the
pure-Python fallback in ``_kernels_py``.

All reductions are plain sequential C loops, so results are
deterministic for a fixed input.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef void _matvec(const double[::1] data, const int[::1] indices,
                  const int[::1] indptr, const double[::1] x,
                  double[::1] out) noexcept nogil:
    cdef Py_ssize_t i, k, n = out.shape[0]
    cdef double acc
    for i in range(n):
        acc = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            acc += data[k] * x[indices[k]]
        out[i] = acc


cdef double _dot(const double[::1] a, const double[::1] b) noexcept nogil:
    cdef Py_ssize_t i, n = a.shape[0]
    cdef double acc = 0.0
    for i in range(n):
        acc += a[i] * b[i]
    return acc


def pcg(const double[::1] data, const int[::1] indices, const int[::1] indptr,
        const double[::1] b, double[::1] x, const double[::1] inv_diag,
        double tol, long maxiter):
    """Jacobi-preconditioned CG on a CSR matrix; ``x`` holds the initial
    guess on entry and the solution on exit.

    Returns ``(iterations, relative_residual, converged)``.  Convergence
    is ``||b - A x|| <= tol * ||b||``; a zero right-hand side short
    circuits to the zero solution.
    """
    cdef Py_ssize_t i, n = b.shape[0]
    cdef double bnorm, rnorm, rz, rz_new, alpha, beta, pap
    cdef long it = 0

    bnorm = 0.0
    for i in range(n):
        bnorm += b[i] * b[i]
    bnorm = bnorm ** 0.5
    if bnorm == 0.0:
        for i in range(n):
            x[i] = 0.0
        return 0, 0.0, True

    r_arr = np.empty(n, dtype=np.float64)
    z_arr = np.empty(n, dtype=np.float64)
    p_arr = np.empty(n, dtype=np.float64)
    ap_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] r = r_arr
    cdef double[::1] z = z_arr
    cdef double[::1] p = p_arr
    cdef double[::1] ap = ap_arr

    with nogil:
        _matvec(data, indices, indptr, x, ap)
        for i in range(n):
            r[i] = b[i] - ap[i]
            z[i] = inv_diag[i] * r[i]
            p[i] = z[i]
        rz = _dot(r, z)

    while it < maxiter:
        with nogil:
            rnorm = _dot(r, r) ** 0.5
        if rnorm <= tol * bnorm:
            return it, rnorm / bnorm, True
        with nogil:
            _matvec(data, indices, indptr, p, ap)
            pap = _dot(p, ap)
        if pap <= 0.0:
            # loss of positive definiteness in finite precision
            break
        with nogil:
            alpha = rz / pap
            for i in range(n):
                x[i] += alpha * p[i]
                r[i] -= alpha * ap[i]
                z[i] = inv_diag[i] * r[i]
            rz_new = _dot(r, z)
            beta = rz_new / rz
            rz = rz_new
            for i in range(n):
                p[i] = z[i] + beta * p[i]
        it += 1

    with nogil:
        _matvec(data, indices, indptr, x, ap)
        for i in range(n):
            r[i] = b[i] - ap[i]
        rnorm = _dot(r, r) ** 0.5
    return it, rnorm / bnorm, rnorm <= tol * bnorm


cdef double _pgs_run(const double[::1] data, const int[::1] indices,
                     const int[::1] indptr, const double[::1] b,
                     const double[::1] diag, double[::1] x,
                     const double[::1] lo, const double[::1] hi,
                     const int[::1] run) noexcept nogil:
    cdef Py_ssize_t idx, i, k
    cdef double rowsum, xn, change, max_change = 0.0
    for idx in range(run.shape[0]):
        i = run[idx]
        if diag[i] == 0.0:
            continue
        rowsum = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            rowsum += data[k] * x[indices[k]]
        xn = (b[i] - rowsum + diag[i] * x[i]) / diag[i]
        if xn < lo[i]:
            xn = lo[i]
        elif xn > hi[i]:
            xn = hi[i]
        change = xn - x[i]
        if change < 0.0:
            change = -change
        if change > max_change:
            max_change = change
        x[i] = xn
    return max_change


def pgs_sweep_runs(const double[::1] data, const int[::1] indices,
                   const int[::1] indptr, const double[::1] b,
                   const double[::1] diag, double[::1] x,
                   const double[::1] lo, const double[::1] hi,
                   color_runs):
    """One projected Gauss-Seidel sweep over precomputed color runs.

    Each visited node with a nonzero diagonal is set to the box-clamped
    single-variable minimizer given current neighbor values.  Nodes of a
    run are mutually uncoupled, so the sequential update matches the
    vectorized fallback.  Returns the largest absolute update.
    """
    cdef double max_change = 0.0, run_change
    cdef const int[::1] run
    for run_arr in color_runs:
        run = run_arr
        with nogil:
            run_change = _pgs_run(data, indices, indptr, b, diag, x, lo, hi, run)
        if run_change > max_change:
            max_change = run_change
    return max_change
