"""Structured triangulation of the lattice region and crack bookkeeping.

Each lattice cell is split into ``n x n`` square pixels of side
``h = epsilon / n``, and each pixel into two right triangles by its
bottom-left to top-right diagonal.  Cracks live on interior mesh edges;
opening an edge duplicates mesh nodes so the two sides of the crack
deform independently.

Node duplication works on triangle corners.  Corners of the triangle
fan around a node are glued whenever two fan triangles share an
unbroken edge at that node; the resulting corner equivalence classes
are the degrees of freedom.  A broken edge whose endpoints keep a
connected fan (for instance a single isolated broken edge) therefore
produces no extra degrees of freedom, which mirrors how a slit of zero
opening carries no elastic relief in this discretization.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

SQRT2 = math.sqrt(2.0)

# corner offsets of a pixel, in grid steps
_PIXEL_CORNERS = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=np.int64)


@dataclass(eq=False)
class Mesh:
    """Triangulated union of lattice cells.

    Node coordinates are ``base + ij * h`` with exact integer grid
    coordinates ``node_ij`` kept alongside the float positions; all
    combinatorial predicates (edge ownership, cell membership) run on
    the integers.  Flat corner ids are ``3 * triangle + slot``.
    """

    lattice: object
    n: int
    h: float
    h_exact: Fraction
    base: tuple
    nodes: np.ndarray
    node_ij: np.ndarray
    triangles: np.ndarray
    tri_type: np.ndarray
    tri_cell: np.ndarray
    edges: np.ndarray
    edge_tris: np.ndarray
    edge_length: np.ndarray
    is_interior: np.ndarray
    interior_edges: np.ndarray
    boundary_node: np.ndarray
    node_key_sorted: np.ndarray = field(repr=False)
    edge_key_sorted: np.ndarray = field(repr=False)
    _key_stride: int = field(repr=False)

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def area(self):
        return self.n_triangles * 0.5 * self.h * self.h

    def node_at(self, i, j):
        """Node id at grid coordinates, or -1 if absent."""
        key = int(i) * self._key_stride + int(j)
        pos = int(np.searchsorted(self.node_key_sorted, key))
        if pos < len(self.node_key_sorted) and self.node_key_sorted[pos] == key:
            return pos
        return -1

    def edge_between(self, a, b):
        """Edge id joining nodes ``a`` and ``b``, or -1 if absent."""
        lo, hi = (a, b) if a < b else (b, a)
        key = int(lo) * (self.n_nodes + 1) + int(hi)
        pos = int(np.searchsorted(self.edge_key_sorted, key))
        if pos < len(self.edge_key_sorted) and self.edge_key_sorted[pos] == key:
            return pos
        return -1


@dataclass(frozen=True)
class CrackState:
    """Pre-existing and emergent broken interior edges, kept disjoint."""

    precrack_edges: frozenset
    emergent_edges: frozenset

    def __post_init__(self):
        object.__setattr__(self, "precrack_edges", frozenset(self.precrack_edges))
        object.__setattr__(self, "emergent_edges", frozenset(self.emergent_edges))
        overlap = self.precrack_edges & self.emergent_edges
        if overlap:
            raise ValueError(f"edges marked both pre-crack and emergent: {sorted(overlap)}")

    @property
    def all_edges(self):
        return self.precrack_edges | self.emergent_edges


@dataclass(eq=False)
class Connectivity:
    """Corner equivalence classes of a cracked mesh.

    ``corner_dof[t, s]`` is the degree of freedom of triangle ``t`` at
    vertex slot ``s``; ``dof_node`` maps each class back to its mesh
    node, and classes at boundary nodes are pinned.
    """

    mesh: Mesh
    state: CrackState
    corner_dof: np.ndarray
    dof_node: np.ndarray
    corner_rep: np.ndarray
    pinned: np.ndarray
    free: np.ndarray
    free_of_dof: np.ndarray

    @property
    def n_dofs(self):
        return len(self.dof_node)

    @property
    def n_free(self):
        return len(self.free)


@dataclass
class BoundaryCondition:
    """Affine boundary displacement ``u0(x) = matrix @ x + offset``."""

    matrix: object
    offset: object = (0.0, 0.0)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64).reshape(2, 2)
        self.offset = np.asarray(self.offset, dtype=np.float64).reshape(2)


@dataclass(eq=False)
class BCMap:
    """Boundary displacement evaluated at every mesh node."""

    bc: BoundaryCondition
    values: np.ndarray
    mask: np.ndarray


def build_grid(lattice, n):
    """Triangulate the union of lattice cells at resolution ``n``.

    Deterministic: node ids ascend lexicographically in integer grid
    coordinates and triangle ids follow pixel order, so equal inputs
    produce identical meshes.
    """
    n = int(n)
    if n < 2:
        raise ValueError("cell resolution n must be at least 2")
    if lattice.n_cells == 0:
        raise ValueError("lattice has no cells to mesh")
    eps = lattice.epsilon
    h_exact = eps / n
    bx = min(c[0] for c in lattice.cells)
    by = min(c[1] for c in lattice.cells)
    base = (bx, by)

    cell_units = np.array(
        [[int((cx - bx) / eps), int((cy - by) / eps)] for cx, cy in lattice.cells],
        dtype=np.int64,
    )
    steps = np.arange(n, dtype=np.int64)
    offs = np.stack(np.meshgrid(steps, steps, indexing="ij"), axis=-1).reshape(-1, 2)
    pix = (cell_units[:, None, :] * n + offs[None, :, :]).reshape(-1, 2)
    pix_cell = np.repeat(np.arange(len(cell_units), dtype=np.int64), n * n)

    corners = pix[:, None, :] + _PIXEL_CORNERS[None, :, :]
    stride = int(corners[..., 1].max()) + 2
    corner_keys = corners[..., 0] * stride + corners[..., 1]
    node_keys = np.unique(corner_keys)
    node_ij = np.stack([node_keys // stride, node_keys % stride], axis=-1)

    nodes = np.empty((len(node_ij), 2), dtype=np.float64)
    for k, (i, j) in enumerate(node_ij):
        nodes[k, 0] = float(bx + h_exact * int(i))
        nodes[k, 1] = float(by + h_exact * int(j))

    cid = np.searchsorted(node_keys, corner_keys)  # (P, 4) node ids
    n00, n10, n11, n01 = cid[:, 0], cid[:, 1], cid[:, 2], cid[:, 3]
    n_pix = len(pix)
    triangles = np.empty((2 * n_pix, 3), dtype=np.int64)
    triangles[0::2] = np.stack([n00, n10, n11], axis=-1)
    triangles[1::2] = np.stack([n00, n11, n01], axis=-1)
    tri_type = np.tile(np.array([0, 1], dtype=np.int8), n_pix)
    tri_cell = np.repeat(pix_cell, 2)

    pair_slots = np.array([[0, 1], [1, 2], [0, 2]])
    tri_edges = triangles[:, pair_slots]  # (M, 3, 2)
    tri_edges = np.sort(tri_edges, axis=-1)
    flat = tri_edges.reshape(-1, 2)
    ekeys = flat[:, 0] * (len(node_ij) + 1) + flat[:, 1]
    edge_keys, inverse = np.unique(ekeys, return_inverse=True)
    n_edges = len(edge_keys)
    edges = np.stack(
        [edge_keys // (len(node_ij) + 1), edge_keys % (len(node_ij) + 1)], axis=-1
    )

    owner_tri = np.repeat(np.arange(len(triangles), dtype=np.int64), 3)
    order = np.argsort(inverse, kind="stable")
    sorted_eid = inverse[order]
    sorted_tri = owner_tri[order]
    first = np.searchsorted(sorted_eid, np.arange(n_edges))
    counts = np.diff(np.append(first, len(sorted_eid)))
    edge_tris = np.full((n_edges, 2), -1, dtype=np.int64)
    edge_tris[:, 0] = sorted_tri[first]
    two = counts == 2
    edge_tris[two, 1] = sorted_tri[first[two] + 1]

    h = float(h_exact)
    dij = node_ij[edges[:, 1]] - node_ij[edges[:, 0]]
    diag = (dij != 0).all(axis=1)
    edge_length = np.where(diag, h * SQRT2, h)

    is_interior = two
    interior_edges = np.flatnonzero(is_interior).astype(np.int64)

    boundary_node = np.zeros(len(node_ij), dtype=bool)
    bedges = edges[~is_interior]
    boundary_node[bedges.ravel()] = True

    return Mesh(
        lattice=lattice,
        n=n,
        h=h,
        h_exact=h_exact,
        base=base,
        nodes=nodes,
        node_ij=node_ij,
        triangles=triangles,
        tri_type=tri_type,
        tri_cell=tri_cell,
        edges=edges,
        edge_tris=edge_tris,
        edge_length=edge_length,
        is_interior=is_interior,
        interior_edges=interior_edges,
        boundary_node=boundary_node,
        node_key_sorted=node_keys,
        edge_key_sorted=edge_keys,
        _key_stride=stride,
    )


def _corner_of(mesh, tris, node):
    """Flat corner ids of ``node`` inside triangles ``tris`` (vectorized)."""
    slots = (mesh.triangles[tris] == node[:, None]).argmax(axis=1)
    return 3 * tris + slots


def break_edges(mesh, state):
    """Corner equivalence classes for the given crack state.

    Corners are glued across every unbroken interior edge; connected
    components of the resulting corner graph become degrees of freedom.
    Raises ``ValueError`` if the state names a non-interior edge.
    """
    broken = np.fromiter(sorted(state.all_edges), dtype=np.int64, count=len(state.all_edges))
    if len(broken):
        if broken.min() < 0 or broken.max() >= len(mesh.edges):
            raise ValueError("crack state names an edge outside the mesh")
        if not mesh.is_interior[broken].all():
            bad = broken[~mesh.is_interior[broken]]
            raise ValueError(f"crack state names non-interior edges: {bad.tolist()}")

    keep = np.ones(len(mesh.edges), dtype=bool)
    keep[broken] = False
    glue = mesh.interior_edges[keep[mesh.interior_edges]]

    t1 = mesh.edge_tris[glue, 0]
    t2 = mesh.edge_tris[glue, 1]
    a = mesh.edges[glue, 0]
    b = mesh.edges[glue, 1]
    rows = np.concatenate([_corner_of(mesh, t1, a), _corner_of(mesh, t1, b)])
    cols = np.concatenate([_corner_of(mesh, t2, a), _corner_of(mesh, t2, b)])

    n_corners = 3 * mesh.n_triangles
    graph = sp.csr_matrix(
        (np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n_corners, n_corners)
    )
    n_dofs, labels = connected_components(graph, directed=False)

    _, corner_rep = np.unique(labels, return_index=True)
    dof_node = mesh.triangles.ravel()[corner_rep]
    corner_dof = labels.reshape(-1, 3)
    pinned = mesh.boundary_node[dof_node]
    free = np.flatnonzero(~pinned).astype(np.int64)
    free_of_dof = np.full(n_dofs, -1, dtype=np.int64)
    free_of_dof[free] = np.arange(len(free))

    return Connectivity(
        mesh=mesh,
        state=state,
        corner_dof=corner_dof,
        dof_node=dof_node,
        corner_rep=corner_rep,
        pinned=pinned,
        free=free,
        free_of_dof=free_of_dof,
    )


def _stair_path(a, b):
    """Monotone stair path between integer grid points.

    Uses unit steps along the axes plus the (+1, +1) diagonal, matching
    the edges available in the mesh.  Endpoints are visited in
    lexicographic order so the path does not depend on segment
    orientation.
    """
    if (b[0], b[1]) < (a[0], a[1]):
        a, b = b, a
    pts = [tuple(a)]
    x, y = a
    while (x, y) != (b[0], b[1]):
        dx = b[0] - x
        dy = b[1] - y
        if dx > 0 and dy > 0:
            x += 1
            y += 1
        elif dx > 0 and dy >= 0:
            x += 1
        elif dy > 0:
            y += 1
        elif dy < 0:
            y -= 1
        else:
            x += 1
        pts.append((x, y))
    return pts


def rasterize_cracks(geometry, mesh):
    """Interior mesh edges approximating the placed crack segments.

    Each segment becomes a stair path of mesh edges between its
    endpoints rounded to the nearest grid nodes.  Two checks guard the
    approximation: every segment endpoint must keep at least ``h`` of
    clearance to its cell boundary (raises ``ValueError`` naming the
    offender), and the stair length of each segment must lie within
    ``[1, sqrt(2)]`` times the segment length (asserted).
    """
    if not geometry.segments:
        return np.empty(0, dtype=np.int64)
    n = mesh.n
    h_exact = mesh.h_exact
    bx, by = mesh.base
    half = Fraction(1, 2)
    broken = set()
    for seg_i, (p, q) in enumerate(geometry.segments):
        cell = geometry.cell_index[seg_i]
        cx, cy = mesh.lattice.cells[cell]
        for label, (vx, vy) in (("start", p), ("end", q)):
            ux = (vx - cx) / mesh.lattice.epsilon
            uy = (vy - cy) / mesh.lattice.epsilon
            clearance = min(ux, 1 - ux, uy, 1 - uy)
            if clearance < Fraction(1, n):
                raise ValueError(
                    f"segment {seg_i} {label} vertex ({vx}, {vy}) is nearer "
                    f"than h to the boundary of cell {cell}"
                )
        pu = ((p[0] - bx) / h_exact, (p[1] - by) / h_exact)
        qu = ((q[0] - bx) / h_exact, (q[1] - by) / h_exact)
        a = (math.floor(pu[0] + half), math.floor(pu[1] + half))
        bpt = (math.floor(qu[0] + half), math.floor(qu[1] + half))
        path = _stair_path(a, bpt)
        seg_edges = []
        for u, v in zip(path, path[1:]):
            na = mesh.node_at(*u)
            nb = mesh.node_at(*v)
            eid = mesh.edge_between(na, nb) if na >= 0 and nb >= 0 else -1
            if eid < 0 or not mesh.is_interior[eid]:
                raise ValueError(
                    f"segment {seg_i} rasterizes outside the interior mesh near {u}"
                )
            seg_edges.append(eid)
        seg_len = math.hypot(float(q[0] - p[0]), float(q[1] - p[1]))
        stair_len = float(mesh.edge_length[seg_edges].sum())
        assert (1.0 - 1e-12) * seg_len <= stair_len <= (SQRT2 + 1e-12) * seg_len, (
            f"stair length {stair_len} of segment {seg_i} outside "
            f"[1, sqrt(2)] x {seg_len}"
        )
        broken.update(seg_edges)
    return np.array(sorted(broken), dtype=np.int64)


def apply_bc(mesh, bc):
    """Evaluate the affine boundary displacement at every node."""
    values = mesh.nodes @ bc.matrix.T + bc.offset
    return BCMap(bc=bc, values=values, mask=mesh.boundary_node)
