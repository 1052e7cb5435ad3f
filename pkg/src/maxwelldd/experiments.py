"""Desk-scale wavenumber sweep benchmarks for the Schwarz solvers.

Each sweep maps a wavenumber k to a mesh size n ~ c k^{3/2} (which keeps
the pollution error under control), a subdomain grid ~ k^alpha, a coarse
grid ~ k^{alpha'}, and absorption parameters kappa_prob / kappa_prec = k^beta.
For every requested preconditioner it then runs right-preconditioned GMRES
with a seeded random initial guess and records iteration counts and wall
times (setup plus solve).  Growth exponents gamma (against k) and
xi = 2 gamma / 9 (against problem size, since n ~ k^{9/2}) are fitted by
least squares on the log-log data.
"""

from __future__ import annotations

import io
import csv
import gc
import logging
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .assembly import BC, RHS, ProblemConfig, assemble_parts, assemble_rhs, \
    local_matrix_impedance, local_matrix_pec
from .decomposition import build_coarse_restriction, build_cover, \
    galerkin_coarse_matrix
from .krylov import GmresConfig, Side, gmres
from .mesh import build_cube_mesh, build_nested_pair
from .precond import Kind, Levels, build, factorize, _edge_midpoints

logger = logging.getLogger(__name__)


class KappaRule(str, Enum):
    K_SQUARED = "k_squared"
    K = "k"
    ZERO = "zero"

    def value_at(self, k: float) -> float:
        if self is KappaRule.K_SQUARED:
            return k ** 2
        if self is KappaRule.K:
            return k
        return 0.0


class Overlap(str, Enum):
    TWO_H = "2h"
    GENEROUS = "generous"


DEFAULT_DOF_CAP = 2_000_000

_PRESET_KINDS = {
    "exp1": [(Kind.AS, Levels.TWO), (Kind.RAS, Levels.TWO),
             (Kind.HRAS, Levels.TWO)],
    "exp2": [(Kind.RAS, Levels.TWO), (Kind.HRAS, Levels.TWO),
             (Kind.IMPRAS, Levels.TWO), (Kind.IMPHRAS, Levels.TWO)],
    "exp3": [(Kind.IMPHRAS, Levels.TWO)],
    "exp4": [(Kind.IMPHRAS, Levels.TWO), (Kind.IMPHRAS, Levels.ONE)],
}

_PRESET_DEFAULTS = {
    "exp1": dict(bc=BC.PEC, kappa_prob_rule=KappaRule.K_SQUARED, beta=2.0,
                 alpha=1.0, alpha_prime=1.0, overlap=Overlap.GENEROUS,
                 k_list=(5.0, 7.5, 10.0)),
    "exp2": dict(bc=BC.PEC, kappa_prob_rule=KappaRule.K_SQUARED, beta=2.0,
                 alpha=0.8, alpha_prime=0.8, overlap=Overlap.TWO_H,
                 k_list=(5.0, 10.0)),
    "exp3": dict(bc=BC.IMPEDANCE, kappa_prob_rule=KappaRule.K, beta=2.0,
                 alpha=0.8, alpha_prime=0.8, overlap=Overlap.TWO_H,
                 k_list=(5.0, 10.0)),
    "exp4": dict(bc=BC.IMPEDANCE, kappa_prob_rule=KappaRule.ZERO, beta=1.0,
                 alpha=0.8, alpha_prime=0.8, overlap=Overlap.TWO_H,
                 k_list=(5.0, 10.0)),
}


@dataclass(frozen=True)
class ExperimentSpec:
    """A parameter sweep: wavenumbers, scaling exponents and methods."""

    preset: str = "custom"
    k_list: tuple[float, ...] = (5.0, 10.0)
    alpha: float = 0.8          # subdomain grid ~ k^alpha
    alpha_prime: float = 0.8    # coarse grid ~ k^alpha'
    beta: float = 2.0           # kappa_prec = k^beta
    kappa_prob_rule: KappaRule = KappaRule.K_SQUARED
    bc: BC = BC.PEC
    overlap: Overlap = Overlap.TWO_H
    kinds: tuple[tuple[Kind, Levels], ...] = ()
    mesh_constant: float = 1.3  # n ~ mesh_constant * k^{3/2}
    seed: int = 0
    tol: float = 1e-6
    max_iter: int = 200
    dof_cap: int = DEFAULT_DOF_CAP
    fit: bool = True

    def __post_init__(self):
        if not all(k > 0 for k in self.k_list):
            raise ValueError("wavenumbers must be positive")
        if self.mesh_constant <= 0:
            raise ValueError("mesh_constant must be positive")
        self._check_preset()

    def _check_preset(self):
        p = self.preset
        if p == "custom":
            return
        if p not in _PRESET_DEFAULTS:
            raise ValueError(f"unknown preset {p!r}")
        want = _PRESET_DEFAULTS[p]
        fixed = {"exp1": ("bc", "kappa_prob_rule", "beta", "alpha",
                          "alpha_prime", "overlap"),
                 "exp2": ("bc", "kappa_prob_rule", "beta", "alpha",
                          "alpha_prime", "overlap"),
                 "exp3": ("bc", "kappa_prob_rule", "overlap"),
                 "exp4": ("bc", "kappa_prob_rule", "beta", "overlap")}[p]
        for name in fixed:
            if getattr(self, name) != want[name]:
                raise ValueError(
                    f"preset {p} fixes {name}={want[name]!r}, "
                    f"got {getattr(self, name)!r}")
        if p == "exp3" and (self.alpha not in (0.6, 0.8)
                            or self.alpha_prime != self.alpha
                            or self.beta not in (1.0, 2.0)):
            raise ValueError(
                "preset exp3 takes alpha = alpha' in {0.6, 0.8} and "
                "beta in {1, 2}")
        if p == "exp4" and (self.alpha, self.alpha_prime) not in \
                ((0.6, 0.9), (0.7, 0.8), (0.8, 0.8)):
            raise ValueError(
                "preset exp4 takes (alpha, alpha') in "
                "{(0.6,0.9), (0.7,0.8), (0.8,0.8)}")


def make_spec(preset: str = "custom", **overrides) -> ExperimentSpec:
    """Build an ExperimentSpec from a preset name plus overrides."""
    base: dict = dict(preset=preset)
    if preset != "custom":
        if preset not in _PRESET_DEFAULTS:
            raise ValueError(f"unknown preset {preset!r}")
        base.update(_PRESET_DEFAULTS[preset])
        base["kinds"] = tuple(_PRESET_KINDS[preset])
    base.update(overrides)
    base["k_list"] = tuple(base.get("k_list", (5.0, 10.0)))
    base["kinds"] = tuple(base.get("kinds", ()))
    return ExperimentSpec(**base)


@dataclass(frozen=True)
class SizeSelection:
    """Resolved discretisation sizes for one wavenumber."""

    k: float
    n_fine: int
    n_sub_per_dir: int
    n_coarse: int
    overlap_layers: int
    kappa_prob: float
    kappa_prec: float


def _largest_divisor_leq(n: int, bound: int) -> int:
    for d in range(min(n, max(bound, 1)), 0, -1):
        if n % d == 0:
            return d
    return 1


def resolve_sizes(spec: ExperimentSpec, k: float) -> SizeSelection:
    """Pick mesh/subdomain/coarse sizes for wavenumber k.

    The mesh size is adjusted within +-3 of round(c k^{3/2}) to the value
    whose divisors best realize the desired subdomain and coarse counts
    (ties: closest to the target, then the finer mesh).
    """
    target = max(1, int(np.round(spec.mesh_constant * k ** 1.5)))
    d_sub = max(1, int(np.round(k ** spec.alpha)))
    d_coarse = max(1, int(np.round(k ** spec.alpha_prime)))

    best = None
    for n in range(max(1, target - 3), target + 4):
        ns = _largest_divisor_leq(n, d_sub)
        ncs = _largest_divisor_leq(n, d_coarse)
        key = (ns / d_sub + ncs / d_coarse, -abs(n - target), n)
        if best is None or key > best[0]:
            best = (key, n, ns, ncs)
    _, n_fine, n_sub, n_coarse = best

    if spec.overlap is Overlap.GENEROUS:
        layers = max(1, int(np.round(0.25 * n_fine / n_sub)))
    else:
        layers = 1
    return SizeSelection(
        k=k, n_fine=n_fine, n_sub_per_dir=n_sub, n_coarse=n_coarse,
        overlap_layers=layers, kappa_prob=spec.kappa_prob_rule.value_at(k),
        kappa_prec=k ** spec.beta)


def count_edges(n: int) -> int:
    return 3 * n * (n + 1) ** 2 + 3 * n ** 2 * (n + 1) + n ** 3


def estimate_dofs(n: int, bc: BC) -> int:
    e = count_edges(n)
    return e - 18 * n * n if bc == BC.PEC else e


def kind_label(kind: Kind, levels: Levels) -> str:
    tag = kind.value.upper()
    return f"#{tag}" if levels == Levels.TWO else f"#{tag}-1L"


@dataclass
class ExperimentRow:
    k: float
    n: int
    n_sub: int
    n_cs: int | None
    iterations: dict[str, int] = field(default_factory=dict)
    converged: dict[str, bool] = field(default_factory=dict)
    times: dict[str, float] = field(default_factory=dict)


@dataclass
class ResultTable:
    spec: ExperimentSpec
    labels: list[str]
    rows: list[ExperimentRow] = field(default_factory=list)
    skipped: list[tuple[float, str]] = field(default_factory=list)
    gamma: dict[str, float] = field(default_factory=dict)
    xi: dict[str, float] = field(default_factory=dict)


def fit_growth_exponent(ks, ys) -> float:
    """Least-squares slope of log(y) against log(k)."""
    ks = np.asarray(ks, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if ks.shape[0] != ys.shape[0] or ks.shape[0] < 2:
        raise ValueError("need at least two (k, y) points")
    if np.any(ks <= 0) or np.any(ys <= 0):
        raise ValueError("fit requires positive data")
    return float(np.polyfit(np.log(ks), np.log(ys), 1)[0])


def _attach_fits(table: ResultTable) -> None:
    if not table.spec.fit or len(table.rows) < 2:
        return
    ks = np.array([row.k for row in table.rows])
    columns: dict[str, np.ndarray] = {
        "n": np.array([row.n for row in table.rows], dtype=float)}
    if all(row.n_cs is not None for row in table.rows):
        columns["n_CS"] = np.array([row.n_cs for row in table.rows],
                                   dtype=float)
    for label in table.labels:
        its, tms, kk = [], [], []
        for row in table.rows:
            if row.converged.get(label):
                kk.append(row.k)
                its.append(row.iterations[label])
                tms.append(row.times[label])
        if len(kk) >= 2:
            columns[label] = (np.array(kk), np.array(its, dtype=float))
            columns[f"Time {label[1:]}"] = (np.array(kk),
                                            np.array(tms, dtype=float))
    for name, data in columns.items():
        kk, yy = data if isinstance(data, tuple) else (ks, data)
        if np.all(yy > 0):
            g = fit_growth_exponent(kk, yy)
            table.gamma[name] = g
            table.xi[name] = g * 2.0 / 9.0


def run_experiment(spec: ExperimentSpec) -> ResultTable:
    """Run the sweep; one row per wavenumber under the DOF cap."""
    labels = [kind_label(kd, lv) for kd, lv in spec.kinds]
    table = ResultTable(spec=spec, labels=labels)
    if not spec.kinds:
        return table

    for k in spec.k_list:
        sizes = resolve_sizes(spec, k)
        est = estimate_dofs(sizes.n_fine, spec.bc)
        if est > spec.dof_cap:
            reason = (f"estimated {est} DOFs exceed cap {spec.dof_cap} "
                      f"(n={sizes.n_fine})")
            logger.warning("skipping k=%g: %s", k, reason)
            table.skipped.append((k, reason))
            continue
        row = _run_row(spec, sizes, labels)
        table.rows.append(row)
        gc.collect()
    _attach_fits(table)
    return table


def _run_row(spec: ExperimentSpec, sizes: SizeSelection,
             labels: list[str]) -> ExperimentRow:
    k = sizes.k
    logger.info("k=%g: n=%d, subs=%d^3, coarse=%d, layers=%d",
                k, sizes.n_fine, sizes.n_sub_per_dir, sizes.n_coarse,
                sizes.overlap_layers)
    t0 = time.perf_counter()
    mesh = build_cube_mesh(sizes.n_fine)
    parts = assemble_parts(mesh, spec.bc)
    a_prob = parts.operator(k, sizes.kappa_prob)
    same_kappa = sizes.kappa_prob == sizes.kappa_prec
    a_prec = a_prob if same_kappa else parts.operator(k, sizes.kappa_prec)
    rhs = assemble_rhs(
        mesh, ProblemConfig(k=k, kappa=sizes.kappa_prob, bc=spec.bc),
        parts.dof_map)
    cover = build_cover(mesh, sizes.n_sub_per_dir, sizes.overlap_layers,
                        spec.bc)
    t_problem = time.perf_counter() - t0

    needs_two = any(lv == Levels.TWO for _, lv in spec.kinds)
    coarse_space = coarse_factor = None
    n_cs = None
    t_coarse = 0.0
    if needs_two:
        t0 = time.perf_counter()
        pair = build_nested_pair(sizes.n_fine, sizes.n_coarse)
        coarse_space = build_coarse_restriction(pair, spec.bc)
        coarse_space.a0 = galerkin_coarse_matrix(coarse_space.r0, a_prec)
        cmesh = pair.coarse
        cmid = 0.5 * (cmesh.vertices[cmesh.edges[coarse_space.dof_map_coarse, 0]]
                      + cmesh.vertices[cmesh.edges[coarse_space.dof_map_coarse, 1]])
        coarse_factor = factorize(coarse_space.a0, coords=cmid)
        n_cs = coarse_space.n_coarse
        t_coarse = time.perf_counter() - t0

    factors: dict[bool, list] = {}
    factor_time: dict[bool, float] = {}

    def local_factors(impedance: bool):
        if impedance not in factors:
            t0 = time.perf_counter()
            out = []
            for sub in cover.subdomains:
                if impedance:
                    mat, edges = local_matrix_impedance(
                        mesh, sub.elements,
                        ProblemConfig(k=k, kappa=sizes.kappa_prec, bc=spec.bc))
                    if not np.array_equal(edges, sub.closure_edges):
                        raise AssertionError("closure edge mismatch")
                    dofs = sub.closure_dofs
                else:
                    mat = local_matrix_pec(a_prec, sub.interior_dofs)
                    dofs = sub.interior_dofs
                out.append(factorize(mat, coords=_edge_midpoints(cover, dofs)))
            factors[impedance] = out
            factor_time[impedance] = time.perf_counter() - t0
        return factors[impedance], factor_time[impedance]

    row = ExperimentRow(k=k, n=parts.n_dofs, n_sub=cover.n_subdomains,
                        n_cs=n_cs)
    for (kind, levels), label in zip(spec.kinds, labels):
        blocks, t_blocks = local_factors(kind.impedance_locals)
        t0 = time.perf_counter()
        pc = build(kind, levels, cover, blocks, a_prec, sizes.kappa_prec,
                   coarse_space=coarse_space if levels == Levels.TWO else None,
                   coarse_factor=coarse_factor if levels == Levels.TWO else None)
        cfg = GmresConfig(tol=spec.tol, max_iter=spec.max_iter,
                          seed=spec.seed, side=Side.RIGHT_STANDARD)
        result = gmres(a_prob, pc, rhs, cfg=cfg)
        t_solve = time.perf_counter() - t0
        row.iterations[label] = result.iterations
        row.converged[label] = result.converged
        row.times[label] = (t_problem + t_blocks + t_solve
                            + (t_coarse if levels == Levels.TWO else 0.0))
        logger.info("  %s: %s iterations, %.1fs", label,
                    result.iterations if result.converged
                    else f"> {spec.max_iter}", row.times[label])
    return row


def emit_table(table: ResultTable, fmt: str = "csv") -> str:
    """Render a result table as CSV or Markdown.

    Column order is fixed: k, n, N_sub, n_CS, one iteration column per
    method, one time column per method; non-converged runs render as
    "> max_iter"; fitted gamma/xi become footer rows.
    """
    header = ["k", "n", "N_sub", "n_CS"] + list(table.labels) \
        + [f"Time {lab[1:]}" for lab in table.labels]

    def cells(row: ExperimentRow) -> list[str]:
        out = [f"{row.k:g}", str(row.n), str(row.n_sub),
               "" if row.n_cs is None else str(row.n_cs)]
        for lab in table.labels:
            if row.converged[lab]:
                out.append(str(row.iterations[lab]))
            else:
                out.append(f"> {table.spec.max_iter}")
        for lab in table.labels:
            out.append(f"{row.times[lab]:.1f}")
        return out

    footers = []
    for name, values in (("gamma", table.gamma), ("xi", table.xi)):
        if values:
            footers.append([name] + [
                f"{values[col]:.2f}" if col in values else ""
                for col in header[1:]])

    body = [cells(row) for row in table.rows]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(body)
        writer.writerows(footers)
        return buf.getvalue()
    if fmt == "md":
        lines = ["| " + " | ".join(header) + " |",
                 "|" + "|".join(["---"] * len(header)) + "|"]
        for r in body + footers:
            lines.append("| " + " | ".join(r) + " |")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown table format {fmt!r}")


def parse_kinds(text: str, default_levels: int = 2
                ) -> tuple[tuple[Kind, Levels], ...]:
    """Parse 'as,ras,hras' or 'imphras:1,imphras:2' into (kind, levels)."""
    out = []
    for item in text.split(","):
        item = item.strip().lower()
        if not item:
            continue
        if ":" in item:
            name, lev = item.split(":", 1)
            out.append((Kind(name), Levels(int(lev))))
        else:
            out.append((Kind(item), Levels(default_levels)))
    return tuple(out)
