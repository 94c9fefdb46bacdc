"""Experiment harness: plain-text configs, runs, sweeps, CSV, and SVG.

The configuration format is line-oriented ``key = value`` with ``#``
comments.  Unknown keys are rejected, every parse error names the key,
and a serialized config round-trips through :func:`parse_config`
unchanged.  Sweep output is deterministic: rerunning a config produces
a byte-identical ``results.csv``.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

from .damage import (
    check_bound_chain,
    classify_active,
    emergent_per_cell,
    straightness,
)
from .geometry import (
    Domain,
    PreCrackPattern,
    build_lattice,
    coverage_ratio,
    place_precracks_map,
    to_fraction,
    validate_pattern,
)
from .grid import (
    BoundaryCondition,
    CrackState,
    apply_bc,
    build_grid,
    rasterize_cracks,
)
from .material import Material
from .minimize import (
    SolverOptions,
    baseline_energy,
    candidate_edges,
    delta_certificate,
    exhaustive_oracle,
    greedy_propagate,
)
from .phasefield import ATParams, alternate_minimize, at_emergent_lengths
from .solve import SolverError

CSV_COLUMNS = (
    "epsilon",
    "l",
    "n_cells",
    "coverage_ratio",
    "baseline_total",
    "achieved_total",
    "surface",
    "emergent_length",
    "m_count",
    "eps_times_m",
    "damaged_area",
    "area_bound_rhs",
    "chain_pass",
    "straightness",
    "wall_time_ms",
)

_POLICY_RE = re.compile(r"^(all|tip-neighborhood\(\d+\))$")


class ConfigError(ValueError):
    """Raised for any malformed or inconsistent configuration."""


@dataclass
class RunConfig:
    """Validated experiment description; one instance drives one command."""

    domain: Domain
    epsilon_list: tuple
    l_list: tuple
    cell_resolution: int
    material: Material
    bc: BoundaryCondition
    pattern: PreCrackPattern | None
    pattern_select: tuple
    pattern_overrides: dict = field(default_factory=dict)
    policy: str = "tip-neighborhood(1)"
    engine: str = "auto"
    backend: str = "discrete"
    stop: float = 1e-10
    tol: float = 1e-8
    maxiter_factor: int = 50
    rho: float = 1e-8
    method: str = "pcg"
    eta: Fraction | None = None
    k_eta: float = 1e-8
    candidate_cap: int = 12
    seed: int = 0
    output_dir: str = "out"

    def solver_options(self):
        return SolverOptions(
            tol=self.tol,
            maxiter_factor=self.maxiter_factor,
            rho=self.rho,
            method=self.method,
        )


def _split_lines(text):
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        pairs.append((lineno, key.strip(), value.strip()))
    return pairs


def _want(kind, key, value):
    """Parse one scalar config value, naming the key on failure."""
    try:
        if kind == "fraction":
            return to_fraction(value)
        if kind == "float":
            return float(value)
        if kind == "int":
            return int(value)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"{key}: {exc}") from None
    raise AssertionError(kind)


def _parse_fraction_list(key, value):
    items = [p for p in value.replace(",", " ").split() if p]
    if not items:
        raise ConfigError(f"{key}: empty list")
    return tuple(_want("fraction", key, p) for p in items)


def _parse_pattern(key, value):
    if value == "none":
        return None
    polylines = []
    for part in value.split(";"):
        vertices = []
        for token in part.split():
            if "," not in token:
                raise ConfigError(f"{key}: vertex {token!r} is not 'x,y'")
            x, y = token.split(",", 1)
            vertices.append((_want("fraction", key, x), _want("fraction", key, y)))
        if vertices:
            polylines.append(vertices)
    if not polylines:
        raise ConfigError(f"{key}: no polylines")
    try:
        pattern = PreCrackPattern(polylines)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None
    problem = validate_pattern(pattern)
    if problem is not None:
        raise ConfigError(f"{key}: {problem}")
    return pattern


def _parse_select(value):
    if value == "all":
        return ("all",)
    parts = value.split()
    if len(parts) == 2 and parts[0] == "strip_y":
        return ("strip_y", to_fraction(parts[1]))
    raise ConfigError(
        f"pattern_select: expected 'all' or 'strip_y <y>', got {value!r}"
    )


_ENUM_KEYS = {
    "engine": ("auto", "incremental", "naive"),
    "backend": ("discrete", "phasefield"),
    "method": ("pcg", "direct"),
}

_KNOWN_KEYS = (
    "domain_origin", "domain_width", "domain_height",
    "epsilon", "epsilon_list", "l", "l_list", "cell_resolution",
    "lambda", "mu", "griffith", "bc_matrix", "bc_offset",
    "pattern", "pattern_select", "policy", "engine", "backend",
    "stop", "tol", "maxiter_factor", "rho", "method",
    "eta", "k_eta", "candidate_cap", "seed", "output_dir",
)


def parse_config(text):
    """Parse the key=value schema into a :class:`RunConfig`.

    Strict by design: unknown keys, duplicates, and values violating any
    module precondition are errors naming the offending key.
    """
    seen = {}
    overrides_raw = {}
    for lineno, key, value in _split_lines(text):
        if key.startswith("pattern_cell_"):
            suffix = key[len("pattern_cell_"):]
            if not suffix.isdigit():
                raise ConfigError(f"{key}: cell index must be a nonnegative integer")
            if int(suffix) in overrides_raw:
                raise ConfigError(f"{key}: duplicate key")
            overrides_raw[int(suffix)] = (key, value)
            continue
        if key not in _KNOWN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen[key] = value

    if "epsilon" in seen and "epsilon_list" in seen:
        raise ConfigError("epsilon: give either epsilon or epsilon_list, not both")
    if "l" in seen and "l_list" in seen:
        raise ConfigError("l: give either l or l_list, not both")
    if "epsilon" in seen:
        epsilon_list = (_want("fraction", "epsilon", seen["epsilon"]),)
    elif "epsilon_list" in seen:
        epsilon_list = _parse_fraction_list("epsilon_list", seen["epsilon_list"])
    else:
        raise ConfigError("epsilon: required (epsilon or epsilon_list)")
    if "l" in seen:
        l_list = (_want("fraction", "l", seen["l"]),)
    elif "l_list" in seen:
        l_list = _parse_fraction_list("l_list", seen["l_list"])
    else:
        raise ConfigError("l: required (l or l_list)")
    for eps in epsilon_list:
        if eps <= 0:
            raise ConfigError(f"epsilon: must be positive, got {eps}")
    for l in l_list:
        if l < 0:
            raise ConfigError(f"l: must be nonnegative, got {l}")

    origin = seen.get("domain_origin", "0,0")
    parts = origin.split(",")
    if len(parts) != 2:
        raise ConfigError(f"domain_origin: expected 'x,y', got {origin!r}")
    try:
        domain = Domain(
            (to_fraction(parts[0]), to_fraction(parts[1])),
            _want("fraction", "domain_width", seen.get("domain_width", "1")),
            _want("fraction", "domain_height", seen.get("domain_height", "1")),
        )
    except ValueError as exc:
        raise ConfigError(f"domain: {exc}") from None

    n = _want("int", "cell_resolution", seen.get("cell_resolution", "8"))
    if n < 2:
        raise ConfigError(f"cell_resolution: must be >= 2, got {n}")

    try:
        material = Material(
            _want("float", "lambda", seen.get("lambda", "1")),
            _want("float", "mu", seen.get("mu", "1")),
            _want("float", "griffith", seen.get("griffith", "0.1")),
        )
    except ValueError as exc:
        key = str(exc).split()[0] if str(exc) else "material"
        raise ConfigError(f"{key}: {exc}") from None

    mat_entries = seen.get("bc_matrix", "0,0,0,0.1").split(",")
    if len(mat_entries) != 4:
        raise ConfigError("bc_matrix: expected 4 comma-separated entries")
    off_entries = seen.get("bc_offset", "0,0").split(",")
    if len(off_entries) != 2:
        raise ConfigError("bc_offset: expected 2 comma-separated entries")
    a, b, c, d = (_want("float", "bc_matrix", v) for v in mat_entries)
    bc = BoundaryCondition(
        [[a, b], [c, d]],
        [_want("float", "bc_offset", v) for v in off_entries],
    )

    pattern = _parse_pattern("pattern", seen.get("pattern", "none"))
    select = _parse_select(seen.get("pattern_select", "all"))
    overrides = {}
    for idx in sorted(overrides_raw):
        key, value = overrides_raw[idx]
        overrides[idx] = _parse_pattern(key, value)

    policy = seen.get("policy", "tip-neighborhood(1)")
    if not _POLICY_RE.match(policy):
        raise ConfigError(f"policy: expected 'all' or 'tip-neighborhood(r)', got {policy!r}")
    enums = {}
    for key, allowed in _ENUM_KEYS.items():
        value = seen.get(key, allowed[0] if key != "method" else "pcg")
        if value not in allowed:
            raise ConfigError(f"{key}: expected one of {allowed}, got {value!r}")
        enums[key] = value

    stop = _want("float", "stop", seen.get("stop", "1e-10"))
    tol = _want("float", "tol", seen.get("tol", "1e-8"))
    maxiter_factor = _want("int", "maxiter_factor", seen.get("maxiter_factor", "50"))
    rho = _want("float", "rho", seen.get("rho", "1e-8"))
    for key, value, low in (("stop", stop, 0.0), ("tol", tol, 0.0), ("rho", rho, 0.0)):
        if value < low:
            raise ConfigError(f"{key}: must be >= {low}, got {value}")
    if maxiter_factor < 1:
        raise ConfigError(f"maxiter_factor: must be >= 1, got {maxiter_factor}")

    eta = None
    if "eta" in seen:
        eta = _want("fraction", "eta", seen["eta"])
        if eta <= 0:
            raise ConfigError(f"eta: must be positive, got {eta}")
    k_eta = _want("float", "k_eta", seen.get("k_eta", "1e-8"))
    if k_eta <= 0:
        raise ConfigError(f"k_eta: must be positive, got {k_eta}")
    cap = _want("int", "candidate_cap", seen.get("candidate_cap", "12"))
    if not 0 < cap <= 16:
        raise ConfigError(f"candidate_cap: must be in 1..16, got {cap}")

    return RunConfig(
        domain=domain,
        epsilon_list=epsilon_list,
        l_list=tuple(l_list),
        cell_resolution=n,
        material=material,
        bc=bc,
        pattern=pattern,
        pattern_select=select,
        pattern_overrides=overrides,
        policy=policy,
        engine=enums["engine"],
        backend=enums["backend"],
        stop=stop,
        tol=tol,
        maxiter_factor=maxiter_factor,
        rho=rho,
        method=enums["method"],
        eta=eta,
        k_eta=k_eta,
        candidate_cap=cap,
        seed=_want("int", "seed", seen.get("seed", "0")),
        output_dir=seen.get("output_dir", "out"),
    )


def _fmt_fraction(value):
    return str(Fraction(value))


def _fmt_pattern(pattern):
    if pattern is None:
        return "none"
    return "; ".join(
        " ".join(f"{_fmt_fraction(x)},{_fmt_fraction(y)}" for x, y in line)
        for line in pattern.polylines
    )


def serialize_config(config):
    """Emit the full effective configuration, defaults included.

    ``parse_config(serialize_config(c))`` reproduces ``c``; the manifest
    writer relies on this for its completeness audit.
    """
    bc = config.bc
    lines = [
        f"domain_origin = {_fmt_fraction(config.domain.origin[0])},"
        f"{_fmt_fraction(config.domain.origin[1])}",
        f"domain_width = {_fmt_fraction(config.domain.width)}",
        f"domain_height = {_fmt_fraction(config.domain.height)}",
        "epsilon_list = " + ",".join(_fmt_fraction(e) for e in config.epsilon_list),
        "l_list = " + ",".join(_fmt_fraction(l) for l in config.l_list),
        f"cell_resolution = {config.cell_resolution}",
        f"lambda = {config.material.lam!r}",
        f"mu = {config.material.mu!r}",
        f"griffith = {config.material.griffith!r}",
        "bc_matrix = " + ",".join(repr(float(v)) for v in config.bc.matrix.reshape(-1)),
        "bc_offset = " + ",".join(repr(float(v)) for v in bc.offset),
        f"pattern = {_fmt_pattern(config.pattern)}",
        "pattern_select = " + (
            "all" if config.pattern_select[0] == "all"
            else f"strip_y {_fmt_fraction(config.pattern_select[1])}"
        ),
    ]
    for idx in sorted(config.pattern_overrides):
        lines.append(f"pattern_cell_{idx} = {_fmt_pattern(config.pattern_overrides[idx])}")
    lines += [
        f"policy = {config.policy}",
        f"engine = {config.engine}",
        f"backend = {config.backend}",
        f"stop = {config.stop!r}",
        f"tol = {config.tol!r}",
        f"maxiter_factor = {config.maxiter_factor}",
        f"rho = {config.rho!r}",
        f"method = {config.method}",
    ]
    if config.eta is not None:
        lines.append(f"eta = {_fmt_fraction(config.eta)}")
    lines += [
        f"k_eta = {config.k_eta!r}",
        f"candidate_cap = {config.candidate_cap}",
        f"seed = {config.seed}",
        f"output_dir = {config.output_dir}",
    ]
    return "\n".join(lines) + "\n"


def _patterns_for(config, lattice):
    """Per-cell pattern list after row selection and explicit overrides."""
    eps = lattice.epsilon
    pats = []
    for cx, cy in lattice.cells:
        keep = True
        if config.pattern_select[0] == "strip_y":
            y = config.pattern_select[1]
            keep = cy <= y < cy + eps
        pats.append(config.pattern if keep else None)
    for idx, pattern in config.pattern_overrides.items():
        if idx >= lattice.n_cells:
            raise ConfigError(
                f"pattern_cell_{idx}: lattice has only {lattice.n_cells} cells"
            )
        pats[idx] = pattern
    return pats


@dataclass(eq=False)
class CaseResult:
    """Everything one (epsilon, all-l) computation produces."""

    epsilon: Fraction
    lattice: object
    mesh: object
    state: object
    baseline: object
    energy: object
    per_cell: object
    outside: float
    delta: float | None
    elapsed_ms: int


def _run_case(config, eps, want_oracle=False):
    t0 = time.perf_counter()
    lattice = build_lattice(config.domain, eps)
    mesh = build_grid(lattice, config.cell_resolution)
    geometry = place_precracks_map(lattice, _patterns_for(config, lattice))
    pre = rasterize_cracks(geometry, mesh)
    bcmap = apply_bc(mesh, config.bc)
    options = config.solver_options()
    baseline = baseline_energy(mesh, pre, bcmap, config.material, options)

    delta = None
    if config.backend == "phasefield":
        h = mesh.h_exact
        params = ATParams(
            eta=float(config.eta if config.eta is not None else 2 * h),
            k_eta=config.k_eta,
            tol=config.tol,
            maxiter_factor=config.maxiter_factor,
        )
        at = alternate_minimize(mesh, pre, bcmap, config.material, params)
        if not at.converged:
            raise SolverError(float("nan"), at.sweeps)
        energy = at.energy
        per_cell, outside = at_emergent_lengths(
            at.v, at.u, mesh, lattice, config.material, params, pre)
        state = None
    else:
        pre_state = CrackState(frozenset(int(e) for e in pre), frozenset())
        cands = candidate_edges(mesh, pre_state, config.policy)
        frozen = len(cands) <= config.candidate_cap
        # oracle-sized instances always run on the frozen arena, so solve,
        # sweep, and render agree on the reported search and a certificate
        # computed for one of them describes all of them
        result = greedy_propagate(
            mesh, pre, bcmap, config.material,
            policy=config.policy, options=options,
            stop=config.stop, engine=config.engine,
            candidates=cands if frozen else None,
        )
        if want_oracle and frozen:
            oracle = exhaustive_oracle(
                mesh, pre, cands, bcmap, config.material, options)
            delta = delta_certificate(result, oracle)
        energy = result.energy
        state = result.state
        per_cell, outside = emergent_per_cell(state, mesh, lattice)

    elapsed_ms = int(round(1e3 * (time.perf_counter() - t0)))
    return CaseResult(
        epsilon=eps, lattice=lattice, mesh=mesh, state=state,
        baseline=baseline, energy=energy, per_cell=per_cell,
        outside=float(outside), delta=delta, elapsed_ms=elapsed_ms,
    )


def _case_worker(args):
    config_text, eps_text = args
    config = parse_config(config_text)
    case = _run_case(config, to_fraction(eps_text))
    # meshes and LU objects stay in the worker; ship only row ingredients
    return {
        "epsilon": eps_text,
        "n_cells": case.lattice.n_cells,
        "coverage": coverage_ratio(case.lattice),
        "baseline_total": case.baseline.total,
        "elastic": case.energy.elastic,
        "surface": case.energy.surface,
        "total": case.energy.total,
        "per_cell": [float(v) for v in case.per_cell],
        "outside": case.outside,
        "elapsed_ms": case.elapsed_ms,
    }


def _case_summary(case):
    return {
        "epsilon": _fmt_fraction(case.epsilon),
        "n_cells": case.lattice.n_cells,
        "coverage": coverage_ratio(case.lattice),
        "baseline_total": case.baseline.total,
        "elastic": case.energy.elastic,
        "surface": case.energy.surface,
        "total": case.energy.total,
        "per_cell": [float(v) for v in case.per_cell],
        "outside": case.outside,
        "elapsed_ms": case.elapsed_ms,
    }


def _fmt_float(value):
    return repr(float(value))


def _rows_from_summaries(config, summaries):
    """Build CSV rows; the area bound uses B = max achieved total."""
    upper = max(s["total"] for s in summaries)
    g = config.material.griffith
    rows = []
    all_pass = True
    for summary in summaries:
        eps = to_fraction(summary["epsilon"])
        lattice = build_lattice(config.domain, eps)
        for l in sorted(config.l_list):
            report = classify_active(summary["per_cell"], summary["outside"], lattice, l)
            energy = _EnergyView(summary["surface"], summary["total"])
            check = check_bound_chain(report, energy, config.material, upper=upper)
            all_pass = all_pass and check.passed
            gl = g * float(l)
            straight = straightness(report)
            rows.append({
                "epsilon": summary["epsilon"],
                "l": _fmt_fraction(l),
                "n_cells": str(summary["n_cells"]),
                "coverage_ratio": _fmt_float(summary["coverage"]),
                "baseline_total": _fmt_float(summary["baseline_total"]),
                "achieved_total": _fmt_float(summary["total"]),
                "surface": _fmt_float(summary["surface"]),
                "emergent_length": _fmt_float(report.emergent_length),
                "m_count": str(report.m_count),
                "eps_times_m": _fmt_float(float(eps) * report.m_count),
                "damaged_area": _fmt_float(report.damaged_area),
                "area_bound_rhs": _fmt_float(float(eps) * upper / gl) if gl > 0 else "",
                "chain_pass": "true" if check.passed else "false",
                "straightness": "" if straight is None else _fmt_float(straight),
                "wall_time_ms": "0",
            })
    return rows, all_pass, upper


class _EnergyView:
    """Surface/total pair in the shape check_bound_chain expects."""

    __slots__ = ("surface", "total")

    def __init__(self, surface, total):
        self.surface = surface
        self.total = total


def _write_csv(path, rows, extra_columns=()):
    columns = CSV_COLUMNS + tuple(extra_columns)
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    with open(path, "w", newline="") as handle:
        handle.write(buffer.getvalue())


def _write_manifest(path, config, command, summaries, notes=()):
    lines = [f"# run manifest (microfrac {command})"]
    lines.append(serialize_config(config).rstrip("\n"))
    for summary in summaries:
        lines.append(
            "# case epsilon={epsilon}: baseline={b!r} achieved={t!r} "
            "surface={s!r} wall_ms={ms}".format(
                epsilon=summary["epsilon"], b=float(summary["baseline_total"]),
                t=float(summary["total"]), s=float(summary["surface"]),
                ms=summary["elapsed_ms"],
            )
        )
    for note in notes:
        lines.append(f"# {note}")
    with open(path, "w") as handle:
        handle.write("\n".join(lines) + "\n")


def run_sweep(config, out_dir=None, workers=1):
    """Run every (epsilon, l) pair and write results.csv plus a manifest.

    Cases are grouped by epsilon: the threshold l only affects damage
    classification, so each epsilon is minimized exactly once.  Rows are
    ordered epsilon descending then l ascending.  Returns True iff all
    chain checks passed.
    """
    out = out_dir or config.output_dir
    os.makedirs(out, exist_ok=True)
    order = sorted(config.epsilon_list, reverse=True)
    if workers > 1 and len(order) > 1:
        text = serialize_config(config)
        jobs = [(text, _fmt_fraction(eps)) for eps in order]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            summaries = list(pool.map(_case_worker, jobs))
    else:
        summaries = [_case_summary(_run_case(config, eps)) for eps in order]
    rows, all_pass, upper = _rows_from_summaries(config, summaries)
    _write_csv(os.path.join(out, "results.csv"), rows)
    _write_manifest(
        os.path.join(out, "manifest.txt"), config, "sweep", summaries,
        notes=[f"sweep upper bound B={upper!r}",
               f"chain checks {'passed' if all_pass else 'FAILED'}"],
    )
    return all_pass


def run_single(config, out_dir=None):
    """One (epsilon, l) run: results.csv, damage.svg, manifest.txt.

    When the candidate set is oracle-sized (at most ``candidate_cap``
    edges) the exhaustive optimum is also computed and the certified
    optimality gap is recorded; the CSV gains a delta_certificate column.
    """
    if len(config.epsilon_list) != 1 or len(config.l_list) != 1:
        raise ConfigError("epsilon: run_single needs exactly one epsilon and one l")
    out = out_dir or config.output_dir
    os.makedirs(out, exist_ok=True)
    case = _run_case(config, config.epsilon_list[0],
                     want_oracle=config.backend == "discrete")
    summary = _case_summary(case)
    rows, all_pass, _ = _rows_from_summaries(config, [summary])
    row = rows[0]
    row["delta_certificate"] = "" if case.delta is None else _fmt_float(case.delta)
    _write_csv(os.path.join(out, "results.csv"), rows,
               extra_columns=("delta_certificate",))

    l = config.l_list[0]
    report = classify_active(summary["per_cell"], summary["outside"],
                             case.lattice, l)
    svg = render_svg(case.state, report, case.mesh, case.lattice)
    with open(os.path.join(out, "damage.svg"), "w") as handle:
        handle.write(svg)
    notes = [f"chain checks {'passed' if all_pass else 'FAILED'}"]
    if case.delta is not None:
        notes.append(f"delta_certificate = {case.delta!r}")
    _write_manifest(os.path.join(out, "manifest.txt"), config, "solve",
                    [summary], notes=notes)
    return all_pass and (case.delta is None or case.delta >= 0)


def run_oracle(config, out_dir=None):
    """Greedy-versus-exhaustive comparison on an oracle-sized instance."""
    if len(config.epsilon_list) != 1 or len(config.l_list) != 1:
        raise ConfigError("epsilon: oracle runs need exactly one epsilon and one l")
    if config.backend != "discrete":
        raise ConfigError("backend: oracle runs require the discrete backend")
    out = out_dir or config.output_dir
    os.makedirs(out, exist_ok=True)
    eps = config.epsilon_list[0]
    lattice = build_lattice(config.domain, eps)
    mesh = build_grid(lattice, config.cell_resolution)
    geometry = place_precracks_map(lattice, _patterns_for(config, lattice))
    pre = rasterize_cracks(geometry, mesh)
    bcmap = apply_bc(mesh, config.bc)
    options = config.solver_options()

    cands = candidate_edges(
        mesh, CrackState(frozenset(int(e) for e in pre), frozenset()), config.policy)
    if len(cands) > config.candidate_cap:
        raise ConfigError(
            f"candidate_cap: instance has {len(cands)} candidates, cap is "
            f"{config.candidate_cap}")
    result = greedy_propagate(mesh, pre, bcmap, config.material,
                              options=options, stop=config.stop,
                              engine=config.engine, candidates=cands)
    oracle = exhaustive_oracle(mesh, pre, cands, bcmap, config.material, options)
    delta = delta_certificate(result, oracle)
    print(f"candidates = {len(cands)}")
    print(f"greedy total = {result.energy.total!r}")
    print(f"oracle total = {oracle.energy.total!r}")
    print(f"delta_certificate = {delta!r}")
    summary = {
        "epsilon": _fmt_fraction(eps), "n_cells": lattice.n_cells,
        "coverage": coverage_ratio(lattice),
        "baseline_total": result.baseline.total,
        "elastic": result.energy.elastic, "surface": result.energy.surface,
        "total": result.energy.total, "per_cell": [], "outside": 0.0,
        "elapsed_ms": 0,
    }
    _write_manifest(
        os.path.join(out, "manifest.txt"), config, "oracle", [summary],
        notes=[f"candidates = {len(cands)}",
               f"greedy total = {result.energy.total!r}",
               f"oracle total = {oracle.energy.total!r}",
               f"delta_certificate = {delta!r}"],
    )
    return delta >= 0


_SVG_SCALE = 640


def _svg_xy(point, view):
    x0, y0, width, height = view
    s = _SVG_SCALE / max(width, height)
    return (float(point[0]) - x0) * s, (y0 + height - float(point[1])) * s


def render_svg(state, report, mesh, lattice):
    """Standalone SVG: cell grid, active fills, pre-cracks, emergent cracks.

    ``state`` may be None (phase-field runs); crack overlays are then
    omitted and only the grid and active cells are drawn.
    """
    eps = lattice.epsilon
    dom = lattice.domain
    view = (float(dom.origin[0]), float(dom.origin[1]),
            float(dom.width), float(dom.height))
    s = _SVG_SCALE / max(view[2], view[3])
    w_px, h_px = view[2] * s, view[3] * s
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w_px:.0f}" '
        f'height="{h_px + 60:.0f}" viewBox="0 0 {w_px:.2f} {h_px + 60:.2f}">',
        f'<rect x="0" y="0" width="{w_px:.2f}" height="{h_px + 60:.2f}" fill="white"/>',
    ]

    def rect(origin, side, style):
        x, y = _svg_xy((origin[0], origin[1] + side), view)
        d = float(side) * s
        parts.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{d:.2f}" '
                     f'height="{d:.2f}" {style}/>')

    for idx in report.active:
        rect(lattice.cells[int(idx)], eps, 'fill="#f4a743" fill-opacity="0.45"')
    for cell in lattice.cells:
        rect(cell, eps, 'fill="none" stroke="#bbbbbb" stroke-width="0.8"')
    x, y = _svg_xy((dom.origin[0], dom.origin[1] + dom.height), view)
    parts.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{view[2] * s:.2f}" '
                 f'height="{view[3] * s:.2f}" fill="none" stroke="#444444" '
                 f'stroke-width="1.2"/>')

    def edge_lines(edges, color, width):
        for e in sorted(edges):
            a, b = mesh.edges[int(e)]
            xa, ya = _svg_xy(mesh.nodes[a], view)
            xb, yb = _svg_xy(mesh.nodes[b], view)
            parts.append(f'<line x1="{xa:.2f}" y1="{ya:.2f}" x2="{xb:.2f}" '
                         f'y2="{yb:.2f}" stroke="{color}" stroke-width="{width}"/>')

    if state is not None:
        edge_lines(state.precrack_edges, "#8b1a1a", 2.2)
        edge_lines(state.emergent_edges, "#1554b0", 2.2)

    base = h_px + 16
    legend = [("#8b1a1a", "pre-crack"), ("#1554b0", "emergent"),
              ("#f4a743", "active cell")]
    for i, (color, label) in enumerate(legend):
        x0 = 10 + 150 * i
        parts.append(f'<line x1="{x0}" y1="{base}" x2="{x0 + 24}" y2="{base}" '
                     f'stroke="{color}" stroke-width="4"/>')
        parts.append(f'<text x="{x0 + 30}" y="{base + 4}" font-size="13" '
                     f'font-family="sans-serif">{label}</text>')
    caption = (f"epsilon={Fraction(report.epsilon).limit_denominator(10**9)}  "
               f"l={Fraction(report.l).limit_denominator(10**9)}  "
               f"M={report.m_count}")
    parts.append(f'<text x="10" y="{base + 28}" font-size="14" '
                 f'font-family="sans-serif">{caption}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def run_lattice(config):
    for eps in sorted(config.epsilon_list, reverse=True):
        lattice = build_lattice(config.domain, eps)
        print(f"epsilon={_fmt_fraction(eps)} n_cells={lattice.n_cells} "
              f"coverage_ratio={coverage_ratio(lattice)!r}")
    return True


def run_render(config, out_dir=None):
    """Recompute a single-run pipeline from a manifest and rewrite the SVG."""
    if len(config.epsilon_list) != 1 or len(config.l_list) != 1:
        raise ConfigError("epsilon: render needs a single-run manifest")
    out = out_dir or config.output_dir
    os.makedirs(out, exist_ok=True)
    case = _run_case(config, config.epsilon_list[0])
    report = classify_active(case.per_cell, case.outside, case.lattice,
                             config.l_list[0])
    svg = render_svg(case.state, report, case.mesh, case.lattice)
    with open(os.path.join(out, "damage.svg"), "w") as handle:
        handle.write(svg)
    return True


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="microfrac",
        description="Fracture-energy minimization on microfractured bodies.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("lattice", "print cell counts and coverage for each epsilon"),
        ("solve", "single run: results.csv, damage.svg, manifest.txt"),
        ("sweep", "epsilon x l sweep: results.csv, manifest.txt"),
        ("oracle", "greedy versus exhaustive optimum on a small instance"),
        ("render", "re-render damage.svg from a manifest"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="path to config file")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--workers", type=int, default=1,
                       help="concurrent sweep workers")
        p.add_argument("--backend", default=None,
                       help="backend override (discrete | phasefield)")
    args = parser.parse_args(argv)

    try:
        with open(args.config) as handle:
            text = handle.read()
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        config = parse_config(text)
        if args.backend is not None:
            if args.backend not in _ENUM_KEYS["backend"]:
                raise ConfigError(f"backend: unknown backend {args.backend!r}")
            config.backend = args.backend
        if args.workers < 1:
            raise ConfigError("workers: must be >= 1")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        if args.command == "lattice":
            ok = run_lattice(config)
        elif args.command == "solve":
            ok = run_single(config, args.out)
        elif args.command == "sweep":
            ok = run_sweep(config, args.out, workers=args.workers)
        elif args.command == "oracle":
            ok = run_oracle(config, args.out)
        else:
            ok = run_render(config, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, ValueError) as exc:
        print(f"run error: {exc}", file=sys.stderr)
        return 1
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
