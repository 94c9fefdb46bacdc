"""Kernel backend selection and solver-facing wrappers.

The compiled extension ``_kernels`` is preferred; the pure-Python
implementation ``_kernels_py`` is used when the extension is missing or
when the environment variable ``MICROFRAC_FORCE_PY`` is set to a
non-empty value other than ``0``.  Both expose the same routines, so
everything above this module is backend agnostic.
"""

import os

import numpy as np
import scipy.sparse as sp

from . import _kernels_py

try:
    from . import _kernels
except ImportError:  # extension not built
    _kernels = None

_IMPLS = {"python": _kernels_py}
if _kernels is not None:
    _IMPLS["compiled"] = _kernels

if os.environ.get("MICROFRAC_FORCE_PY", "0") not in ("", "0"):
    BACKEND = "python"
else:
    BACKEND = "compiled" if _kernels is not None else "python"


def available_backends():
    """Names of usable kernel backends, deterministic order."""
    return tuple(sorted(_IMPLS))


def _impl(backend):
    if backend is None:
        backend = BACKEND
    try:
        return _IMPLS[backend]
    except KeyError:
        raise ValueError(f"unknown kernel backend {backend!r}") from None


def csr_parts(a):
    """CSR arrays with the dtypes the kernels expect."""
    a = sp.csr_matrix(a)
    data = np.ascontiguousarray(a.data, dtype=np.float64)
    indices = np.ascontiguousarray(a.indices, dtype=np.int32)
    indptr = np.ascontiguousarray(a.indptr, dtype=np.int32)
    return data, indices, indptr


def pcg_solve(a, b, x0=None, tol=1e-8, maxiter=None, backend=None):
    """Solve ``a x = b`` (SPD CSR) by Jacobi-preconditioned CG.

    Returns ``(x, relative_residual, iterations, converged)``.  The
    iteration cap defaults to ``50 * n``.
    """
    n = a.shape[0]
    if maxiter is None:
        maxiter = 50 * n
    data, indices, indptr = csr_parts(a)
    diag = a.diagonal()
    inv_diag = np.where(diag > 0.0, 1.0 / np.where(diag > 0.0, diag, 1.0), 1.0)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64, copy=True)
    b = np.ascontiguousarray(b, dtype=np.float64)
    iters, relres, converged = _impl(backend).pcg(
        data, indices, indptr, b, x, inv_diag, float(tol), int(maxiter)
    )
    return x, float(relres), int(iters), bool(converged)


class BoxQP:
    """Box-constrained SPD quadratic ``min 1/2 x'Ax - b'x, lo <= x <= hi``.

    Solved by projected Gauss-Seidel over a node coloring of the matrix
    graph; within a color no two nodes couple, so sweep results do not
    depend on intra-color order.  Nodes with zero diagonal are skipped.
    """

    def __init__(self, a, lo, hi, color_runs, backend=None):
        self.a = sp.csr_matrix(a)
        self.parts = csr_parts(self.a)
        self.diag = np.ascontiguousarray(self.a.diagonal(), dtype=np.float64)
        self.lo = np.ascontiguousarray(lo, dtype=np.float64)
        self.hi = np.ascontiguousarray(hi, dtype=np.float64)
        self.color_runs = [np.ascontiguousarray(r, dtype=np.int32) for r in color_runs]
        self.impl = _impl(backend)

    def sweep(self, b, x):
        data, indices, indptr = self.parts
        return float(
            self.impl.pgs_sweep_runs(
                data, indices, indptr, b, self.diag, x, self.lo, self.hi, self.color_runs
            )
        )

    def projected_gradient(self, b, x):
        g = self.a @ x - b
        pg = g.copy()
        at_lo = x <= self.lo
        at_hi = x >= self.hi
        pg[at_lo] = np.minimum(g[at_lo], 0.0)
        pg[at_hi] = np.maximum(g[at_hi], 0.0)
        pg[self.diag == 0.0] = 0.0
        return pg

    def solve(self, b, x, tol, max_sweeps):
        """Sweeps until the projected gradient infinity norm is at most
        ``tol``.  Returns ``(sweeps, pg_norm, converged)``; ``x`` is
        updated in place."""
        b = np.ascontiguousarray(b, dtype=np.float64)
        sweeps = 0
        pg_norm = float(np.abs(self.projected_gradient(b, x)).max(initial=0.0))
        while pg_norm > tol and sweeps < max_sweeps:
            self.sweep(b, x)
            sweeps += 1
            pg_norm = float(np.abs(self.projected_gradient(b, x)).max(initial=0.0))
        return sweeps, pg_norm, pg_norm <= tol
