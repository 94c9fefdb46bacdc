"""Per-cell damage accounting and the concentration bound chain.

An emergent edge belongs to the cell whose closed square contains its
midpoint; midpoints on shared cell boundaries go to the cell with the
lexicographically smallest origin, and edges outside every cell are
tallied separately.  Midpoints are handled as doubled integer grid
coordinates, so the assignment is exact.

A cell is active when its emergent length reaches ``epsilon * l``
(inclusive).  With ``m_count`` active cells the chain

    griffith * m_count * l * epsilon  <=  surface  <=  total  <=  B

rearranges to ``m_count <= B / (griffith * l * epsilon)`` and
``damaged_area = epsilon^2 * m_count <= epsilon * B / (griffith * l)``,
which is the scaling this package exists to exhibit.
"""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .geometry import to_fraction


def cell_units_map(lattice, mesh):
    """Map integer cell coordinates (in cell widths from the mesh base)
    to lattice cell indices."""
    eps = lattice.epsilon
    bx, by = mesh.base
    return {
        (int((cx - bx) / eps), int((cy - by) / eps)): i
        for i, (cx, cy) in enumerate(lattice.cells)
    }


@dataclass(eq=False)
class DamageReport:
    """Active-cell classification of one crack state at one threshold."""

    epsilon: float
    l: float
    per_cell: np.ndarray
    outside_length: float
    active: np.ndarray
    m_count: int
    damaged_area: float
    cell_centers: np.ndarray

    @property
    def emergent_length(self):
        return float(self.per_cell.sum()) + self.outside_length


@dataclass
class ChainCheck:
    """Result of the bound chain; ``values`` holds every compared side."""

    passed: bool
    values: dict
    failures: tuple


def emergent_per_cell(state, mesh, lattice):
    """Emergent crack length per cell plus the outside tally.

    Ties on shared boundaries resolve to the lexicographically smallest
    cell origin, so the partition is deterministic and each edge counts
    exactly once.
    """
    units = cell_units_map(lattice, mesh)
    per_cell = np.zeros(lattice.n_cells)
    outside = 0.0
    n2 = 2 * mesh.n
    for e in sorted(state.emergent_edges):
        a, b = mesh.edges[e]
        mid2 = mesh.node_ij[a] + mesh.node_ij[b]
        cands = []
        for axis in range(2):
            q, rem = divmod(int(mid2[axis]), n2)
            cands.append([q - 1, q] if rem == 0 else [q])
        hits = sorted(
            (ux, uy) for ux in cands[0] for uy in cands[1] if (ux, uy) in units
        )
        if hits:
            per_cell[units[hits[0]]] += mesh.edge_length[e]
        else:
            outside += float(mesh.edge_length[e])
    return per_cell, outside


def classify_active(per_cell, outside_length, lattice, l):
    """Damage report with the inclusive activity threshold ``epsilon * l``."""
    l_exact = to_fraction(l)
    if l_exact < 0:
        raise ValueError("threshold l must be nonnegative")
    threshold = float(lattice.epsilon * l_exact)
    per_cell = np.asarray(per_cell, dtype=np.float64)
    active = np.flatnonzero(per_cell >= threshold)
    eps = float(lattice.epsilon)
    centers = np.array(
        [[float(cx + lattice.epsilon / 2), float(cy + lattice.epsilon / 2)]
         for cx, cy in lattice.cells]
    ) if lattice.n_cells else np.zeros((0, 2))
    return DamageReport(
        epsilon=eps,
        l=float(l_exact),
        per_cell=per_cell,
        outside_length=float(outside_length),
        active=active,
        m_count=int(len(active)),
        damaged_area=eps * eps * len(active),
        cell_centers=centers,
    )


def check_bound_chain(report, energy, material, upper=None, rtol=1e-9):
    """Verify the concentration chain for one report and energy breakdown.

    Checks, each with relative slack ``rtol``:

    1. ``griffith * m_count * l * epsilon <= surface``
    2. ``surface <= total``
    3. with ``upper`` given (an a-priori bound ``B`` on the total):
       ``total <= upper``, ``m_count <= B / (griffith l epsilon)`` and
       ``damaged_area <= epsilon B / (griffith l)``; the count and area
       inequalities are skipped when ``griffith * l == 0`` since the
       bound degenerates.
    """
    g = material.griffith
    eps = report.epsilon
    l = report.l
    values = {
        "surface_lower": g * report.m_count * l * eps,
        "surface": energy.surface,
        "total": energy.total,
        "m_count": float(report.m_count),
        "damaged_area": report.damaged_area,
    }
    failures = []

    def leq(name, lhs, rhs):
        if not lhs <= rhs + rtol * max(1.0, abs(rhs)):
            failures.append(name)

    leq("surface_lower<=surface", values["surface_lower"], energy.surface)
    leq("surface<=total", energy.surface, energy.total)
    if upper is not None:
        values["upper"] = float(upper)
        leq("total<=upper", energy.total, upper)
        if g * l > 0:
            values["m_bound"] = upper / (g * l * eps)
            values["area_bound"] = eps * upper / (g * l)
            leq("m_count<=m_bound", report.m_count, values["m_bound"])
            leq("damaged_area<=area_bound", report.damaged_area, values["area_bound"])
    return ChainCheck(passed=not failures, values=values, failures=tuple(failures))


def straightness(report):
    """RMS perpendicular deviation of active cell centers from their
    total-least-squares line, in units of ``epsilon``.

    Absent (``None``) when fewer than two cells are active.  Collinear
    active cells give exactly 0; the four corners of a ``2 epsilon``
    square give exactly 1.
    """
    if report.m_count < 2:
        return None
    pts = report.cell_centers[report.active]
    centered = pts - pts.mean(axis=0)
    svals = np.linalg.svd(centered, compute_uv=False)
    rms = float(svals[-1]) / np.sqrt(report.m_count)
    return rms / report.epsilon
