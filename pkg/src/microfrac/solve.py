"""Assembly and equilibrium solves on a cracked connectivity.

The two triangle types of the structured mesh are congruent, so their
strain-displacement and stiffness matrices are computed once and
scattered.  The assembled form is

    E(u) = 1/2 u' K u,   K = K_elastic + rho * h^2 * I,

where the tiny diagonal term keeps the pinned-reduced system positive
definite when cracks isolate mesh fragments from the boundary.  The
regularization is excluded from reported elastic energies, which are
always evaluated element by element from strains.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .material import density, stiffness_form


class SolverError(RuntimeError):
    """Equilibrium solve failed to reach the requested residual."""

    def __init__(self, residual, iterations):
        super().__init__(
            f"equilibrium solver stalled at relative residual {residual:.3e} "
            f"after {iterations} iterations"
        )
        self.residual = residual
        self.iterations = iterations


def strain_displacement(h):
    """Per-type matrices mapping the corner displacement 6-vector
    (slot-major, x then y) to Voigt strain.

    Shape function gradients are constant on each triangle: the lower
    type has vertices (0,0) (h,0) (h,h) and the upper (0,0) (h,h) (0,h),
    matching the vertex order produced by ``build_grid``.
    """
    inv = 1.0 / h
    grads = np.array(
        [
            [[-inv, 0.0], [inv, -inv], [0.0, inv]],
            [[0.0, -inv], [inv, 0.0], [-inv, inv]],
        ]
    )
    b_stack = np.zeros((2, 3, 6))
    for t in range(2):
        for s in range(3):
            gx, gy = grads[t, s]
            b_stack[t, 0, 2 * s] = gx
            b_stack[t, 1, 2 * s + 1] = gy
            b_stack[t, 2, 2 * s] = 0.5 * gy
            b_stack[t, 2, 2 * s + 1] = 0.5 * gx
    return b_stack


def element_matrices(material, h):
    """Strain-displacement and stiffness matrices for both triangle types.

    Returns ``(b_stack, ke_stack, area)`` with element stiffness
    ``ke = area * B' Q B`` so that ``1/2 u' ke u`` is the element energy.
    """
    b_stack = strain_displacement(h)
    q = stiffness_form(material)
    area = 0.5 * h * h
    ke_stack = np.array([area * b.T @ q @ b for b in b_stack])
    return b_stack, ke_stack, area


@dataclass(eq=False)
class System:
    """Assembled quadratic form, partitioned by the pinned dof set."""

    connectivity: object
    material: object
    rho: float
    k_full: sp.csr_matrix
    k_ff: sp.csr_matrix
    k_fp: sp.csr_matrix
    free_sc: np.ndarray
    pinned_sc: np.ndarray
    b_stack: np.ndarray
    ke_stack: np.ndarray

    @property
    def n_free(self):
        return len(self.free_sc)


def _scalar_dofs(dofs):
    out = np.empty(2 * len(dofs), dtype=np.int64)
    out[0::2] = 2 * dofs
    out[1::2] = 2 * dofs + 1
    return out


def assemble(connectivity, material, rho, weights=None):
    """Assemble stiffness on the duplicated-node dofs.

    ``weights`` optionally scales each element's stiffness (used by the
    phase-field solver where the factor is ``mean(v)^2 + k``).  The
    element scatter and the assembled quadratic agree exactly with the
    element-wise energy (up to rounding), which the tests check on
    random fields.
    """
    mesh = connectivity.mesh
    b_stack, ke_stack, _ = element_matrices(material, mesh.h)
    g = connectivity.corner_dof
    gsc = np.empty((len(g), 6), dtype=np.int64)
    gsc[:, 0::2] = 2 * g
    gsc[:, 1::2] = 2 * g + 1

    data = ke_stack[mesh.tri_type]
    if weights is not None:
        data = data * np.asarray(weights, dtype=np.float64)[:, None, None]
    rows = np.broadcast_to(gsc[:, :, None], data.shape)
    cols = np.broadcast_to(gsc[:, None, :], data.shape)
    n_sc = 2 * connectivity.n_dofs
    k = sp.coo_matrix(
        (data.ravel(), (rows.ravel(), cols.ravel())), shape=(n_sc, n_sc)
    ).tocsr()
    if rho:
        k = k + sp.identity(n_sc, format="csr") * (rho * mesh.h**2)

    free_sc = _scalar_dofs(connectivity.free)
    pinned_sc = _scalar_dofs(np.flatnonzero(connectivity.pinned))
    k_ff = k[free_sc][:, free_sc].tocsr()
    k_fp = k[free_sc][:, pinned_sc].tocsr()
    return System(
        connectivity=connectivity,
        material=material,
        rho=float(rho),
        k_full=k,
        k_ff=k_ff,
        k_fp=k_fp,
        free_sc=free_sc,
        pinned_sc=pinned_sc,
        b_stack=b_stack,
        ke_stack=ke_stack,
    )


@dataclass(eq=False)
class DisplacementField:
    """Displacement per dof plus how the solve went."""

    connectivity: object
    values: np.ndarray
    residual: float
    iterations: int


def interpolate_bc(connectivity, bcmap):
    """Affine boundary field evaluated at every dof's parent node."""
    return bcmap.values[connectivity.dof_node].astype(np.float64, copy=True)


def equilibrium(system, bcmap, tol=1e-8, maxiter_factor=50, method="pcg", x0=None):
    """Minimize the assembled quadratic with pinned dofs set from ``bcmap``.

    ``method`` is ``"pcg"`` (Jacobi-preconditioned CG, warm started from
    the affine interpolation of the boundary data) or ``"direct"``
    (sparse LU, used for cross checks).  Raises ``SolverError`` when the
    iteration cap is hit before the relative residual drops to ``tol``.
    """
    conn = system.connectivity
    full = interpolate_bc(conn, bcmap) if x0 is None else np.array(x0, dtype=np.float64)
    flat = full.reshape(-1)
    u_p = flat[system.pinned_sc]
    b = -(system.k_fp @ u_p)

    if method == "direct":
        x = spla.spsolve(system.k_ff.tocsc(), b)
        bnorm = float(np.linalg.norm(b))
        res = float(np.linalg.norm(b - system.k_ff @ x))
        relres = res / bnorm if bnorm > 0 else 0.0
        iters = 1
        if bnorm == 0.0:
            x = np.zeros_like(b)
    elif method == "pcg":
        x, relres, iters, converged = kernels.pcg_solve(
            system.k_ff,
            b,
            x0=flat[system.free_sc],
            tol=tol,
            maxiter=maxiter_factor * max(1, system.n_free),
        )
        if not converged:
            raise SolverError(relres, iters)
    else:
        raise ValueError(f"unknown equilibrium method {method!r}")

    out = np.empty(2 * conn.n_dofs)
    out[system.pinned_sc] = u_p
    out[system.free_sc] = x
    return DisplacementField(
        connectivity=conn,
        values=out.reshape(-1, 2),
        residual=float(relres),
        iterations=int(iters),
    )


def element_strains(field):
    """Voigt strain per triangle for a displacement field."""
    conn = field.connectivity
    mesh = conn.mesh
    b_stack = strain_displacement(mesh.h)
    u = field.values[conn.corner_dof].reshape(-1, 6)
    return np.einsum("tij,tj->ti", b_stack[mesh.tri_type], u)


def elastic_energy(field, material):
    """Stored elastic energy, summed element by element."""
    mesh = field.connectivity.mesh
    e = element_strains(field)
    return float(0.5 * mesh.h * mesh.h * density(material, e).sum())


@dataclass
class EnergyBreakdown:
    elastic: float
    surface: float
    total: float
    residual: float


def total_energy(field, state, mesh, material):
    """Elastic plus Griffith surface energy of the emergent crack.

    Pre-crack edges carry no surface cost; only emergent edges are
    charged at ``griffith`` per unit length.
    """
    emergent = np.fromiter(
        sorted(state.emergent_edges), dtype=np.int64, count=len(state.emergent_edges)
    )
    surface = float(material.griffith * mesh.edge_length[emergent].sum()) if len(emergent) else 0.0
    elastic = elastic_energy(field, material)
    return EnergyBreakdown(
        elastic=elastic,
        surface=surface,
        total=elastic + surface,
        residual=field.residual,
    )
