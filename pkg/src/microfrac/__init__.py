"""Fracture-energy minimization on periodically microfractured bodies.

The package computes certified approximate minimizers of an elastic
energy with a Griffith surface penalty on a lattice of pre-cracked
cells, classifies damaged cells against a length threshold, and checks
the concentration bounds relating cell count, crack length, and energy.
"""

from .damage import (
    ChainCheck,
    DamageReport,
    cell_units_map,
    check_bound_chain,
    classify_active,
    emergent_per_cell,
    straightness,
)
from .geometry import (
    CellLattice,
    CrackGeometry,
    Domain,
    PreCrackPattern,
    build_lattice,
    coverage_ratio,
    place_precracks,
    place_precracks_map,
    to_fraction,
    validate_pattern,
)
from .grid import (
    BCMap,
    BoundaryCondition,
    Connectivity,
    CrackState,
    Mesh,
    apply_bc,
    break_edges,
    build_grid,
    rasterize_cracks,
)
from .kernels import BACKEND, available_backends
from .material import Material, coercivity_constant, density, stiffness_form
from .minimize import (
    MinimizeResult,
    SolverOptions,
    baseline_energy,
    candidate_edges,
    delta_certificate,
    exhaustive_oracle,
    greedy_propagate,
)
from .phasefield import (
    ATParams,
    ATResult,
    alternate_minimize,
    at_emergent_lengths,
    at_energy,
    tube_mask,
)
from .solve import (
    DisplacementField,
    EnergyBreakdown,
    SolverError,
    elastic_energy,
    equilibrium,
    total_energy,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BCMap",
    "BoundaryCondition",
    "CellLattice",
    "ChainCheck",
    "Connectivity",
    "CrackGeometry",
    "CrackState",
    "DamageReport",
    "DisplacementField",
    "Domain",
    "EnergyBreakdown",
    "Material",
    "Mesh",
    "MinimizeResult",
    "ATParams",
    "ATResult",
    "PreCrackPattern",
    "SolverError",
    "SolverOptions",
    "alternate_minimize",
    "apply_bc",
    "at_emergent_lengths",
    "at_energy",
    "available_backends",
    "baseline_energy",
    "break_edges",
    "build_grid",
    "build_lattice",
    "candidate_edges",
    "cell_units_map",
    "check_bound_chain",
    "classify_active",
    "coercivity_constant",
    "coverage_ratio",
    "delta_certificate",
    "density",
    "elastic_energy",
    "emergent_per_cell",
    "equilibrium",
    "exhaustive_oracle",
    "greedy_propagate",
    "place_precracks",
    "place_precracks_map",
    "rasterize_cracks",
    "stiffness_form",
    "straightness",
    "to_fraction",
    "total_energy",
    "tube_mask",
    "validate_pattern",
]
