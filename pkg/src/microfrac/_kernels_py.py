"""Pure-NumPy fallback for the compiled CSR kernels.

Mirrors the call signatures of ``_kernels`` so the backend selector can
swap implementations freely.  The Gauss-Seidel sweep exploits that the
caller orders nodes color by color (no coupling inside a color), which
lets each color update vectorize; numerical results match the compiled
sequential sweep up to floating-point rounding.
"""

import numpy as np
import scipy.sparse as sp


def _as_csr(data, indices, indptr):
    n = len(indptr) - 1
    return sp.csr_matrix((data, indices, indptr), shape=(n, n))


def pcg(data, indices, indptr, b, x, inv_diag, tol, maxiter):
    """Jacobi-preconditioned CG; ``x`` is updated in place.

    Returns ``(iterations, relative_residual, converged)``.
    """
    a = _as_csr(data, indices, indptr)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        x[:] = 0.0
        return 0, 0.0, True

    r = b - a @ x
    z = inv_diag * r
    p = z.copy()
    rz = float(np.dot(r, z))
    it = 0
    while it < maxiter:
        rnorm = float(np.linalg.norm(r))
        if rnorm <= tol * bnorm:
            return it, rnorm / bnorm, True
        ap = a @ p
        pap = float(np.dot(p, ap))
        if pap <= 0.0:
            break
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        z = inv_diag * r
        rz_new = float(np.dot(r, z))
        beta = rz_new / rz
        rz = rz_new
        p = z + beta * p
        it += 1

    rnorm = float(np.linalg.norm(b - a @ x))
    return it, rnorm / bnorm, rnorm <= tol * bnorm


def pgs_sweep_runs(data, indices, indptr, b, diag, x, lo, hi, color_runs):
    """Projected Gauss-Seidel sweep over precomputed color runs.

    ``color_runs`` is a list of node-index arrays; nodes within one run
    are mutually uncoupled so their updates commute.
    """
    a = _as_csr(data, indices, indptr)
    max_change = 0.0
    for run in color_runs:
        d = diag[run]
        active = run[d != 0.0]
        if len(active) == 0:
            continue
        da = diag[active]
        rowsum = a[active] @ x
        xn = (b[active] - rowsum + da * x[active]) / da
        np.clip(xn, lo[active], hi[active], out=xn)
        change = np.abs(xn - x[active])
        if len(change):
            max_change = max(max_change, float(change.max()))
        x[active] = xn
    return max_change
