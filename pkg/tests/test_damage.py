"""Per-cell damage accounting, the bound chain, and straightness."""

from fractions import Fraction

import numpy as np
import pytest

from microfrac import (
    CrackState,
    EnergyBreakdown,
    Material,
    build_grid,
    cell_units_map,
    check_bound_chain,
    classify_active,
    emergent_per_cell,
    straightness,
)

from common import rng, single_cell, unit_lattice


def four_cells(n=4):
    lattice = unit_lattice(Fraction(1, 4))
    assert lattice.n_cells == 4
    return lattice, build_grid(lattice, n)


def emergent(edges):
    return CrackState(frozenset(), frozenset(int(e) for e in edges))


def report_for(lattice, per_cell, l, outside=0.0):
    return classify_active(np.asarray(per_cell, dtype=np.float64), outside, lattice, l)


def breakdown(surface, total):
    return EnergyBreakdown(elastic=total - surface, surface=surface, total=total, residual=0.0)


def exact_assignment_oracle(state, mesh, lattice):
    """Re-derive the per-cell split with Fraction arithmetic only."""
    h = mesh.h_exact
    bx, by = (Fraction(v) for v in mesh.base)
    per_cell = np.zeros(lattice.n_cells)
    outside = 0.0
    for e in sorted(state.emergent_edges):
        a, b = (int(v) for v in mesh.edges[e])
        (ia, ja), (ib, jb) = mesh.node_ij[a], mesh.node_ij[b]
        mx = bx + Fraction(int(ia) + int(ib), 2) * h
        my = by + Fraction(int(ja) + int(jb), 2) * h
        owners = [
            idx
            for idx, (cx, cy) in enumerate(lattice.cells)
            if cx <= mx <= cx + lattice.epsilon and cy <= my <= cy + lattice.epsilon
        ]
        length = float(mesh.edge_length[e])
        if owners:
            owners.sort(key=lambda idx: tuple(lattice.cells[idx]))
            per_cell[owners[0]] += length
        else:
            outside += length
    return per_cell, outside


def test_no_emergent_edges_no_damage():
    lattice, mesh = four_cells()
    per_cell, outside = emergent_per_cell(emergent([]), mesh, lattice)
    assert per_cell.tolist() == [0.0] * 4
    assert outside == 0.0


def test_interior_edge_goes_to_its_cell():
    lattice, mesh = single_cell(4)
    inner = None
    for e in mesh.interior_edges:
        a, b = mesh.edges[e]
        mid = 0.5 * (mesh.nodes[a] + mesh.nodes[b])
        if (1 / 3 < mid[0] < 2 / 3) and (1 / 3 < mid[1] < 2 / 3):
            inner = int(e)
            break
    per_cell, outside = emergent_per_cell(emergent([inner]), mesh, lattice)
    assert per_cell[0] == mesh.edge_length[inner]
    assert outside == 0.0


def test_shared_boundary_edge_counted_once_for_lex_smallest_cell():
    lattice, mesh = four_cells()
    # vertical edge along the cell interface x = 1/2
    target = None
    for e in mesh.interior_edges:
        a, b = mesh.edges[e]
        pa, pb = mesh.nodes[a], mesh.nodes[b]
        if pa[0] == 0.5 and pb[0] == 0.5 and abs(pa[1] - pb[1]) > 0:
            if min(pa[1], pb[1]) >= 0.25 and max(pa[1], pb[1]) <= 0.5:
                target = int(e)
                break
    assert target is not None
    per_cell, outside = emergent_per_cell(emergent([target]), mesh, lattice)
    owners = np.flatnonzero(per_cell)
    assert len(owners) == 1
    origin = tuple(lattice.cells[owners[0]])
    assert origin == (Fraction(1, 4), Fraction(1, 4))
    assert per_cell.sum() == mesh.edge_length[target]
    assert outside == 0.0


def test_partition_is_exhaustive_and_exclusive():
    lattice, mesh = four_cells()
    gen = rng(23)
    interior = [int(e) for e in mesh.interior_edges]
    for _ in range(10):
        k = int(gen.integers(1, 20))
        state = emergent(gen.choice(interior, size=k, replace=False).tolist())
        per_cell, outside = emergent_per_cell(state, mesh, lattice)
        total = float(mesh.edge_length[sorted(state.emergent_edges)].sum())
        assert per_cell.sum() + outside == pytest.approx(total, rel=1e-12)


def test_assignment_matches_exact_fraction_oracle():
    lattice, mesh = four_cells()
    gen = rng(31)
    interior = [int(e) for e in mesh.interior_edges]
    for _ in range(8):
        k = int(gen.integers(1, 25))
        state = emergent(gen.choice(interior, size=k, replace=False).tolist())
        got_cells, got_out = emergent_per_cell(state, mesh, lattice)
        want_cells, want_out = exact_assignment_oracle(state, mesh, lattice)
        assert np.allclose(got_cells, want_cells, atol=1e-12)
        assert got_out == pytest.approx(want_out, abs=1e-12)


def test_activity_threshold_is_inclusive():
    lattice, _ = four_cells()
    threshold = float(lattice.epsilon) * 0.5
    report = report_for(lattice, [threshold, np.nextafter(threshold, 0.0), 0.0, 0.0], l=0.5)
    assert report.active.tolist() == [0]
    assert report.m_count == 1
    assert report.damaged_area == 0.0625
    assert report.l == 0.5


def test_classification_example():
    lattice, _ = four_cells()
    report = report_for(lattice, [0.05, 0.0, 0.02, 0.05], l=0.1)
    # threshold 0.25 * 0.1 = 0.025: cells 0 and 3 are active
    assert report.active.tolist() == [0, 3]
    assert report.m_count == 2
    assert report.damaged_area == pytest.approx(2 * 0.0625, abs=0)
    assert report.emergent_length == pytest.approx(0.12, rel=1e-12)


def test_m_count_monotone_in_threshold():
    lattice, _ = four_cells()
    per_cell = [0.01, 0.03, 0.08, 0.11]
    counts = [report_for(lattice, per_cell, l).m_count for l in (0.01, 0.1, 0.3, 0.5)]
    assert counts == sorted(counts, reverse=True)


def test_negative_threshold_rejected():
    lattice, _ = four_cells()
    with pytest.raises(ValueError, match="nonnegative"):
        report_for(lattice, [0.0] * 4, l=-0.1)


def test_bound_chain_reference_values():
    lattice = unit_lattice(Fraction(1, 10))
    assert lattice.n_cells == 64
    per_cell = np.zeros(64)
    per_cell[[3, 17, 40]] = 0.06  # above threshold 0.1 * 0.5 = 0.05
    report = report_for(lattice, per_cell, l=0.5)
    assert report.m_count == 3
    mat = Material(lam=1.0, mu=1.0, griffith=1.0)
    check = check_bound_chain(report, breakdown(surface=0.2, total=1.9), mat, upper=2.0)
    assert check.passed
    assert check.failures == ()
    assert check.values["m_bound"] == 40.0
    assert check.values["area_bound"] == 0.4
    assert check.values["surface_lower"] == pytest.approx(0.15, rel=1e-15)


def test_bound_chain_flags_violations():
    lattice, _ = four_cells()
    report = report_for(lattice, [0.2, 0.2, 0.0, 0.0], l=0.5)
    assert report.m_count == 2
    mat = Material(lam=1.0, mu=1.0, griffith=1.0)
    # surface below the lower bound and total above the cap
    check = check_bound_chain(report, breakdown(surface=0.01, total=9.0), mat, upper=5.0)
    assert not check.passed
    assert "surface_lower<=surface" in check.failures
    assert "total<=upper" in check.failures


def test_bound_chain_degenerate_griffith_l():
    lattice, _ = four_cells()
    report = report_for(lattice, [0.1, 0.0, 0.0, 0.0], l=0.0)
    mat = Material(lam=1.0, mu=1.0, griffith=1.0)
    check = check_bound_chain(report, breakdown(surface=0.1, total=0.2), mat, upper=0.5)
    assert check.passed
    assert "m_bound" not in check.values
    assert "area_bound" not in check.values


def test_bound_chain_trivial_when_inactive():
    lattice, _ = four_cells()
    report = report_for(lattice, [0.0] * 4, l=0.5)
    mat = Material(lam=1.0, mu=1.0, griffith=0.1)
    check = check_bound_chain(report, breakdown(surface=0.0, total=0.0), mat, upper=0.0)
    assert check.passed


def test_straightness_absent_below_two_cells():
    lattice, _ = four_cells()
    assert straightness(report_for(lattice, [0.1, 0.0, 0.0, 0.0], l=0.5)) is None
    assert straightness(report_for(lattice, [0.0] * 4, l=0.5)) is None


def test_straightness_zero_on_a_row():
    lattice = unit_lattice(Fraction(1, 8))
    row = [i for i, (cx, cy) in enumerate(lattice.cells) if cy == Fraction(1, 2)]
    assert len(row) == 6
    per_cell = np.zeros(lattice.n_cells)
    per_cell[row] = 1.0
    assert straightness(report_for(lattice, per_cell, l=0.5)) == 0.0


def test_straightness_small_on_a_diagonal():
    lattice = unit_lattice(Fraction(1, 8))
    diag = [i for i, (cx, cy) in enumerate(lattice.cells) if cx == cy]
    assert len(diag) == 6
    per_cell = np.zeros(lattice.n_cells)
    per_cell[diag] = 1.0
    assert straightness(report_for(lattice, per_cell, l=0.5)) <= 1e-12


def test_straightness_one_for_square_corners():
    lattice = unit_lattice(Fraction(1, 8))
    corners = [
        i
        for i, (cx, cy) in enumerate(lattice.cells)
        if (cx, cy) in {(Fraction(1, 8), Fraction(1, 8)),
                        (Fraction(3, 8), Fraction(1, 8)),
                        (Fraction(1, 8), Fraction(3, 8)),
                        (Fraction(3, 8), Fraction(3, 8))}
    ]
    assert len(corners) == 4
    per_cell = np.zeros(lattice.n_cells)
    per_cell[corners] = 1.0
    assert straightness(report_for(lattice, per_cell, l=0.5)) == pytest.approx(1.0, rel=1e-12)


def test_straightness_matches_angle_scan_oracle():
    lattice = unit_lattice(Fraction(1, 8))
    gen = rng(5)
    per_cell = np.zeros(lattice.n_cells)
    chosen = gen.choice(lattice.n_cells, size=7, replace=False)
    per_cell[chosen] = 1.0
    report = report_for(lattice, per_cell, l=0.5)
    got = straightness(report)

    pts = report.cell_centers[report.active]
    centered = pts - pts.mean(axis=0)
    theta = np.linspace(0.0, np.pi, 200001)
    normals = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    sq = ((centered @ normals.T) ** 2).sum(axis=0)
    want = np.sqrt(sq.min() / report.m_count) / report.epsilon
    assert got == pytest.approx(want, rel=1e-6)


def test_cell_units_map_round_trip():
    lattice, mesh = four_cells()
    units = cell_units_map(lattice, mesh)
    assert sorted(units.keys()) == [(0, 0), (0, 1), (1, 0), (1, 1)]
    for key, idx in units.items():
        cx, cy = lattice.cells[idx]
        assert key == (
            int((cx - mesh.base[0]) / lattice.epsilon),
            int((cy - mesh.base[1]) / lattice.epsilon),
        )
