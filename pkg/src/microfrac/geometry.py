"""Domain, cell lattice, and pre-crack placement.

All lattice predicates are evaluated in exact rational arithmetic
(`fractions.Fraction`), so cell counts are reproducible for any cell
size, including ones like 1/3 that have no finite binary expansion.
Floats are converted via their exact binary value; strings accept
decimal literals and ``p/q`` rationals.
"""

import math
from dataclasses import dataclass
from fractions import Fraction


def to_fraction(value):
    """Exact rational for an int, float, Fraction, or string literal."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"not a number: {value!r}") from exc
    raise TypeError(f"cannot convert {type(value).__name__} to a rational")


def _point(p):
    x, y = p
    return (to_fraction(x), to_fraction(y))


@dataclass
class Domain:
    """Axis-aligned open rectangle ``(x0, x0+w) x (y0, y0+h)``."""

    origin: tuple = (0, 0)
    width: object = 1
    height: object = 1

    def __post_init__(self):
        self.origin = _point(self.origin)
        self.width = to_fraction(self.width)
        self.height = to_fraction(self.height)
        if self.width <= 0 or self.height <= 0:
            raise ValueError("domain width and height must be positive")

    @property
    def area(self):
        return self.width * self.height


@dataclass
class CellLattice:
    """Cells ``z + eps*[0,1]^2`` with closed square inside the open domain.

    Cell origins ``z`` are integer multiples of ``eps`` in global
    coordinates, sorted lexicographically by (x, y).
    """

    epsilon: Fraction
    domain: Domain
    cells: tuple

    @property
    def n_cells(self):
        return len(self.cells)


@dataclass
class PreCrackPattern:
    """Polylines with vertices strictly inside the open unit cell."""

    polylines: tuple = ()

    def __post_init__(self):
        self.polylines = tuple(
            tuple(_point(v) for v in line) for line in self.polylines
        )


@dataclass
class CrackGeometry:
    """Placed pre-crack segments in global coordinates."""

    segments: tuple = ()
    cell_index: tuple = ()
    total_length: float = 0.0


def build_lattice(domain, epsilon):
    """All cells of size ``epsilon`` whose closed square fits strictly
    inside the open domain.

    Raises ``ValueError`` for a non-positive ``epsilon``.  Cells are
    ordered lexicographically, so two calls with equal arguments return
    equal lattices.
    """
    eps = to_fraction(epsilon)
    if eps <= 0:
        raise ValueError("epsilon must be positive")
    x0, y0 = domain.origin
    x1 = x0 + domain.width
    y1 = y0 + domain.height
    # eps*m > x0 and eps*(m+1) < x1, both strict
    m_lo = math.floor(x0 / eps) + 1
    m_hi = math.ceil(x1 / eps - 1) - 1
    n_lo = math.floor(y0 / eps) + 1
    n_hi = math.ceil(y1 / eps - 1) - 1
    # one multiplication per row/column instead of per cell
    xs = [eps * m for m in range(m_lo, m_hi + 1)]
    ys = [eps * n for n in range(n_lo, n_hi + 1)]
    cells = tuple((x, y) for x in xs for y in ys)
    return CellLattice(epsilon=eps, domain=domain, cells=cells)


def coverage_ratio(lattice):
    """Fraction of the domain area covered by lattice cells."""
    covered = lattice.n_cells * lattice.epsilon**2
    return float(Fraction(covered, lattice.domain.area))


def validate_pattern(pattern):
    """``None`` if the pattern is admissible, else a description naming
    the first violated requirement and the offending vertex."""
    if not pattern.polylines:
        return "pattern has no polylines"
    for i, line in enumerate(pattern.polylines):
        if len(line) < 2:
            return f"polyline {i} has fewer than 2 vertices"
        for j, (x, y) in enumerate(line):
            if not (0 < x < 1 and 0 < y < 1):
                return (
                    f"polyline {i} vertex {j} outside the open unit cell: "
                    f"({x}, {y})"
                )
        for j in range(len(line) - 1):
            if line[j] == line[j + 1]:
                return f"polyline {i} repeats vertex {j}: {line[j]}"
    return None


def _segment_length(p, q):
    dx = float(q[0] - p[0])
    dy = float(q[1] - p[1])
    return math.hypot(dx, dy)


def place_precracks_map(lattice, patterns):
    """Place a per-cell choice of patterns; ``patterns[i]`` is the
    pattern for cell ``i`` or ``None`` for no pre-crack there."""
    if len(patterns) != lattice.n_cells:
        raise ValueError(
            f"expected {lattice.n_cells} per-cell patterns, got {len(patterns)}"
        )
    eps = lattice.epsilon
    segments = []
    cell_index = []
    total = 0.0
    for i, (cell, pattern) in enumerate(zip(lattice.cells, patterns)):
        if pattern is None:
            continue
        problem = validate_pattern(pattern)
        if problem is not None:
            raise ValueError(f"cell {i}: {problem}")
        zx, zy = cell
        for line in pattern.polylines:
            placed = [(zx + eps * vx, zy + eps * vy) for vx, vy in line]
            for p, q in zip(placed, placed[1:]):
                segments.append((p, q))
                cell_index.append(i)
                total += _segment_length(p, q)
    return CrackGeometry(
        segments=tuple(segments), cell_index=tuple(cell_index), total_length=total
    )


def place_precracks(lattice, pattern):
    """Scaled copy of ``pattern`` in every cell of the lattice.

    Segment endpoints stay strictly inside each cell's open interior
    because pattern vertices are strictly inside the unit cell and the
    placement map is affine.
    """
    return place_precracks_map(lattice, [pattern] * lattice.n_cells)
