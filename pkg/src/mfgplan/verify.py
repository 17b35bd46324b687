"""Numerical certification of the planning identities.

Three checks anchor the pipeline: the terminal law of the equilibrium
ensemble must hit the target (planning constraint), the Monte Carlo relative
entropy accumulated along paths must agree with the coupling entropy on the
grid (Girsanov consistency), and the objective drop under a perturbed drift
must equal half the realized squared perturbation (the quadratic-gap
identity behind optimality of the equilibrium).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import parallel
from .config import RunConfig
from .drift import DriftField
from .hamiltonian import ControlSet, CostSpec, check_full_range, check_quadratic_growth
from .incentive import IncentiveValues, ObjectiveResult, incentive_drift, incentive_lq, objective_j
from .measures import GridMeasure, ks_statistic, parse_measure_spec, wasserstein1
from .schrodinger import Coupling, build_reference, coupling_entropy, integrability_diagnostics, sinkhorn_solve
from .simulate import (
    PathEnsemble,
    TimeGrid,
    empirical_flow,
    realized_delta_sq,
    simulate_equilibrium,
    simulate_perturbed,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

__all__ = [
    "PlanningResult",
    "EntropyResult",
    "GapResult",
    "PerturbedRun",
    "VerificationReport",
    "PipelineArtifacts",
    "planning_check",
    "entropy_consistency",
    "optimality_gap_check",
    "full_report",
]


@dataclass(frozen=True)
class PlanningResult:
    w1_terminal: float
    ks_terminal: float
    tol_w1: float
    ok: bool


@dataclass(frozen=True)
class EntropyResult:
    h_grid: float
    h_mc: float
    h_mc_se: float
    rel_err: float
    ok: bool


@dataclass(frozen=True)
class PerturbedRun:
    """Objective under one perturbation, with the realized squared drift shift."""

    delta_spec: str
    objective: ObjectiveResult
    delta_sq_mean: float


@dataclass(frozen=True)
class GapResult:
    delta_spec: str
    predicted: float
    measured: float
    se: float
    ok: bool


@dataclass(frozen=True)
class VerificationReport:
    planning: PlanningResult
    entropy: EntropyResult
    gaps: tuple[GapResult, ...]
    quadratic_growth: tuple[float, float, bool]
    full_range: bool
    equilibrium_j: ObjectiveResult
    bridge_entropy: float
    e_abs_log: float
    e_sq: float
    config_hash: str
    seed: int

    @property
    def all_pass(self) -> bool:
        return self.planning.ok and self.entropy.ok and all(g.ok for g in self.gaps)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "planning": {
                "w1_terminal": self.planning.w1_terminal,
                "ks_terminal": self.planning.ks_terminal,
                "tol_w1": self.planning.tol_w1,
                "pass": self.planning.ok,
            },
            "entropy": {
                "h_grid": self.entropy.h_grid,
                "h_mc": self.entropy.h_mc,
                "h_mc_se": self.entropy.h_mc_se,
                "rel_err": self.entropy.rel_err,
                "pass": self.entropy.ok,
            },
            "gap": [
                {
                    "delta_spec": g.delta_spec,
                    "predicted": g.predicted,
                    "measured": g.measured,
                    "se": g.se,
                    "pass": g.ok,
                }
                for g in self.gaps
            ],
            "assumptions": {
                "quadratic_growth": {
                    "c1": self.quadratic_growth[0],
                    "c2": self.quadratic_growth[1],
                    "ok": self.quadratic_growth[2],
                },
                "full_range": self.full_range,
            },
            "equilibrium_j": {"j": self.equilibrium_j.j, "se": self.equilibrium_j.se},
            "bridge": {
                "entropy": self.bridge_entropy,
                "e_abs_log": self.e_abs_log,
                "e_sq": self.e_sq,
            },
            "all_pass": self.all_pass,
        }


@dataclass
class PipelineArtifacts:
    """In-memory handles to every stage output of a full run."""

    config: RunConfig
    mu0: GridMeasure
    mu1: GridMeasure
    coupling: Coupling
    field: DriftField
    time_grid: TimeGrid
    equilibrium: PathEnsemble
    flow: list
    xi: IncentiveValues
    eq_objective: ObjectiveResult
    perturbed: list[PerturbedRun] = field(default_factory=list)
    report: VerificationReport | None = None


def planning_check(ens: PathEnsemble, mu1: GridMeasure, tol_w1: float) -> PlanningResult:
    """Terminal-law fidelity: W1 and KS of the final cross-section vs mu1."""
    terminal = ens.terminal()
    w1 = wasserstein1(terminal, mu1)
    ks = ks_statistic(terminal, mu1)
    return PlanningResult(w1, ks, tol_w1, w1 < tol_w1)


def entropy_consistency(
    ens: PathEnsemble, field_: DriftField, coupling: Coupling, rel_tol: float = 0.05
) -> EntropyResult:
    """Girsanov entropy along paths vs the coupling entropy on the grid.

    h_mc accumulates beta^2/(2 h) dt with the same drift tables the
    simulator used; both small (< 1e-3) also counts as agreement.
    """
    h_grid = coupling_entropy(coupling)
    rows = field_.row_index(ens.x0)
    dt = ens.time.dt
    per_path = np.zeros(ens.n_paths)
    for k in range(ens.time.n_steps):
        t_eval = min(k * dt, field_.t_cap)
        table = field_.drift_table(t_eval)
        cur = ens.x[:, k]

        def work(lo, hi):
            beta = field_.eval_paths(t_eval, rows[lo:hi], cur[lo:hi], table=table)
            per_path[lo:hi] += beta**2 * dt

        parallel.chunked(ens.n_paths, work)
    per_path /= 2.0 * field_.horizon
    h_mc = float(per_path.mean())
    h_mc_se = float(per_path.std(ddof=1) / np.sqrt(ens.n_paths))
    rel = abs(h_mc - h_grid) / max(h_grid, 0.01)
    ok = rel < rel_tol or (h_mc < 1e-3 and h_grid < 1e-3)
    return EntropyResult(h_grid, h_mc, h_mc_se, rel, ok)


def optimality_gap_check(
    eq: ObjectiveResult, perturbed: list[PerturbedRun], tol_abs: float = 0.01
) -> tuple[GapResult, ...]:
    """Compare measured objective gaps with half the realized squared shift."""
    out = []
    for run in perturbed:
        measured = eq.j - run.objective.j
        predicted = 0.5 * run.delta_sq_mean
        se = float(np.hypot(eq.se, run.objective.se))
        ok = abs(measured - predicted) < 3.0 * se + tol_abs
        out.append(GapResult(run.delta_spec, predicted, measured, se, ok))
    return tuple(out)


def run_pipeline(cfg: RunConfig, threads: int | None = None) -> PipelineArtifacts:
    """bridge -> drift -> simulate -> incentive for one configuration."""
    threads = cfg.threads if threads is None else threads
    mu0 = parse_measure_spec(cfg.mu0_spec, cfg.x_gridspec())
    mu1 = parse_measure_spec(cfg.mu1_spec, cfg.y_gridspec())
    ref = build_reference(mu0, cfg.y_gridspec(), cfg.horizon)
    coupling = sinkhorn_solve(ref, mu1, tol=cfg.sinkhorn_tol, max_iter=cfg.sinkhorn_max_iter)
    field_ = DriftField(coupling)
    tg = TimeGrid(cfg.n_steps)
    cost = CostSpec.parse(cfg.cost, cfg.mf_term)
    control = ControlSet.parse(cfg.control)
    eq = simulate_equilibrium(field_, tg, cfg.n_paths, cfg.seed, threads=threads)
    flow = empirical_flow(eq, tg.times)
    if cost.kind == "quadratic":
        xi = incentive_lq(eq, field_, cost, flow, cfg.y0, threads=threads)
    else:
        xi = incentive_drift(eq, field_, cost, control, flow, cfg.y0, threads=threads)
    eq_obj = objective_j(xi, eq, field_, cost, flow, threads=threads)

    perturbed = []
    for spec in cfg.perturbations:
        if cost.kind != "quadratic":
            raise ValueError("perturbation gap analysis requires the quadratic cost")
        ens = simulate_perturbed(field_, spec, tg, cfg.n_paths, cfg.seed, threads=threads)
        xi_p = incentive_lq(ens, field_, cost, flow, cfg.y0, threads=threads)
        obj = objective_j(xi_p, ens, field_, cost, flow, threads=threads)
        dsq = float(realized_delta_sq(ens).mean())
        perturbed.append(PerturbedRun(spec, obj, dsq))

    return PipelineArtifacts(
        config=cfg,
        mu0=mu0,
        mu1=mu1,
        coupling=coupling,
        field=field_,
        time_grid=tg,
        equilibrium=eq,
        flow=flow,
        xi=xi,
        eq_objective=eq_obj,
        perturbed=perturbed,
    )


def full_report(cfg: RunConfig, threads: int | None = None) -> PipelineArtifacts:
    """Run every stage and assemble the certification report."""
    art = run_pipeline(cfg, threads=threads)
    cost = CostSpec.parse(cfg.cost, cfg.mf_term)
    control = ControlSet.parse(cfg.control)
    planning = planning_check(art.equilibrium, art.mu1, cfg.tol_w1)
    entropy = entropy_consistency(art.equilibrium, art.field, art.coupling, cfg.tol_entropy_rel)
    gaps = optimality_gap_check(art.eq_objective, art.perturbed, cfg.tol_gap_abs)
    z_probe = np.concatenate([-np.logspace(-1, 2, 12), np.logspace(-1, 2, 12)])
    growth = check_quadratic_growth(cost, control, z_probe)
    fr = check_full_range(cost, control)
    e_abs, e_sq = integrability_diagnostics(art.coupling)
    art.report = VerificationReport(
        planning=planning,
        entropy=entropy,
        gaps=gaps,
        quadratic_growth=growth,
        full_range=fr,
        equilibrium_j=art.eq_objective,
        bridge_entropy=coupling_entropy(art.coupling),
        e_abs_log=e_abs,
        e_sq=e_sq,
        config_hash=cfg.config_hash(),
        seed=cfg.seed,
    )
    return art
