"""Command line interface: stage subcommands over a shared run config.

Subcommands: bridge, drift, simulate, incentive, bass, verify, plot. Each
stage writes its artifacts into the configured output directory; `verify`
runs the whole pipeline, emits report.json plus summary figures, and exits 0
only when every check passes. Exit codes: 0 success, 1 stage/check failure,
2 configuration errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import parallel, plots
from .artifacts import write_csv, write_json
from .bass import bass_build, bass_simulate
from .config import ConfigError, RunConfig, load_config
from .drift import DriftField
from .hamiltonian import ControlSet, CostSpec
from .measures import ks_statistic, parse_measure_spec, quantiles, wasserstein1
from .schrodinger import build_reference, coupling_entropy, integrability_diagnostics, sinkhorn_solve
from .simulate import TimeGrid
from .verify import full_report, run_pipeline

log = logging.getLogger(__name__)

FLOW_QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)
DEFAULT_CSV_PATHS = 2000  # cap on paths dumped to paths.csv; raise via --csv-paths


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfgplan", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("bridge", "solve the static bridge and dump the coupling"),
        ("drift", "dump the equilibrium drift on a (t, x) lattice per initial node"),
        ("simulate", "simulate the equilibrium (or perturbed) ensemble"),
        ("incentive", "evaluate the incentive and the Monte Carlo objective"),
        ("bass", "build and simulate the quantile-transform semimartingale"),
        ("verify", "run the full pipeline and certify the planning identities"),
        ("plot", "render figures from existing CSV artifacts"),
    ]:
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="run config (key=value or JSON)")
        p.add_argument("--output", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="simulation seed (overrides config)")
        p.add_argument("--threads", type=int, help="worker threads (or MFP_THREADS)")
        p.add_argument("--paths", type=int, help="number of simulated paths")
        p.add_argument("--steps", type=int, help="number of time steps")
        p.add_argument("--horizon", type=float, help="kernel variance over [0, 1]")
        p.add_argument("--perturb", action="append", help="extra perturbation spec")
        if name == "simulate":
            p.add_argument("--csv-paths", type=int, default=DEFAULT_CSV_PATHS,
                           help="max paths written to paths.csv (0 = all)")
    return parser


def _load(args) -> RunConfig:
    overrides = {
        "output_dir": args.output,
        "seed": args.seed,
        "n_paths": args.paths,
        "n_steps": args.steps,
        "horizon": args.horizon,
        "threads": args.threads,
    }
    cfg = load_config(args.config, overrides)
    if args.perturb:
        cfg = cfg.replaced(perturbations=tuple(cfg.perturbations) + tuple(args.perturb))
    threads = cfg.threads or int(os.environ.get("MFP_THREADS", "1") or 1)
    parallel.set_default_threads(threads)
    return cfg


def _bridge_parts(cfg: RunConfig):
    mu0 = parse_measure_spec(cfg.mu0_spec, cfg.x_gridspec())
    mu1 = parse_measure_spec(cfg.mu1_spec, cfg.y_gridspec())
    ref = build_reference(mu0, cfg.y_gridspec(), cfg.horizon)
    coupling = sinkhorn_solve(ref, mu1, tol=cfg.sinkhorn_tol, max_iter=cfg.sinkhorn_max_iter)
    return mu0, mu1, coupling


def cmd_bridge(cfg: RunConfig) -> int:
    out = Path(cfg.output_dir)
    _, _, coupling = _bridge_parts(cfg)
    entropy = coupling_entropy(coupling)
    e_abs, e_sq = integrability_diagnostics(coupling)
    xs = coupling.ref.x0_grid.nodes
    ys = coupling.ref.x1_grid.nodes
    ii, jj = np.meshgrid(np.arange(xs.size), np.arange(ys.size), indexing="ij")
    pi = coupling.pi()
    write_csv(
        out / "coupling.csv",
        ["i", "j", "x0", "x1", "pi", "log_zeta"],
        [ii.ravel(), jj.ravel(), xs[ii.ravel()], ys[jj.ravel()],
         pi.ravel(), coupling.log_zeta().ravel()],
    )
    write_json(out / "bridge_report.json", {
        "entropy": entropy,
        "iterations": coupling.iterations,
        "marginal_err": coupling.marginal_err,
        "e_abs_log": e_abs,
        "e_sq": e_sq,
    })
    print(f"bridge: entropy={entropy:.6g} iterations={coupling.iterations} "
          f"marginal_err={coupling.marginal_err:.3g} -> {out}")
    return 0


def _drift_lattice(cfg: RunConfig, mu1):
    ts = np.concatenate([np.arange(0.0, 1.0, 0.05), [0.99]])
    x_lo = quantiles(mu1, np.array([0.001]))[0]
    x_hi = quantiles(mu1, np.array([0.999]))[0]
    xs = np.linspace(x_lo, x_hi, 41)
    return ts, xs


def cmd_drift(cfg: RunConfig) -> int:
    out = Path(cfg.output_dir)
    mu0, mu1, coupling = _bridge_parts(cfg)
    field_ = DriftField(coupling)
    ts, xs = _drift_lattice(cfg, mu1)
    rows_t, rows_x0, rows_x, rows_b = [], [], [], []
    for node in mu0.nodes[mu0.w > 0]:
        for t in ts:
            beta = field_.drift_eval(t, node, xs)
            rows_t.append(np.full(xs.size, t))
            rows_x0.append(np.full(xs.size, node))
            rows_x.append(xs)
            rows_b.append(beta)
    write_csv(
        out / "drift.csv",
        ["t", "x0", "x", "beta"],
        [np.concatenate(rows_t), np.concatenate(rows_x0),
         np.concatenate(rows_x), np.concatenate(rows_b)],
    )
    print(f"drift: {len(rows_t)} lattice blocks -> {out / 'drift.csv'}")
    return 0


def _write_ensemble(out: Path, name: str, ens, csv_cap: int) -> None:
    keep = ens.n_paths if csv_cap in (0, None) else min(csv_cap, ens.n_paths)
    if keep < ens.n_paths:
        log.info("writing the first %d of %d paths to %s.csv", keep, ens.n_paths, name)
    times = ens.time.times
    ks = np.arange(times.size)
    pid = np.repeat(np.arange(keep), times.size)
    write_csv(
        out / f"{name}.csv",
        ["path", "k", "t", "x"],
        [pid, np.tile(ks, keep), np.tile(times, keep), ens.x[:keep].ravel()],
    )


def cmd_simulate(cfg: RunConfig, csv_cap: int = DEFAULT_CSV_PATHS) -> int:
    out = Path(cfg.output_dir)
    art = run_pipeline(cfg)
    ens = art.equilibrium
    _write_ensemble(out, "paths", ens, csv_cap)
    levels = np.asarray(FLOW_QUANTILES)
    times = ens.time.times
    qs = np.quantile(ens.x, levels, axis=0)
    write_csv(
        out / "flow.csv",
        ["t", "quantile_level", "value"],
        [np.repeat(times, levels.size), np.tile(levels, times.size), qs.T.ravel()],
    )
    w1 = wasserstein1(ens.terminal(), art.mu1)
    print(f"simulate: {ens.n_paths} paths x {ens.time.n_steps} steps, terminal W1 vs target "
          f"{w1:.4g} -> {out}")
    return 0


def cmd_incentive(cfg: RunConfig) -> int:
    out = Path(cfg.output_dir)
    art = run_pipeline(cfg)
    xi = art.xi
    write_csv(
        out / "xi.csv",
        ["path", "xi", "stoch_int", "quad_term", "mf_term"],
        [np.arange(xi.xi.size), xi.xi, xi.stoch_int, xi.quad_term, xi.mf_term],
    )
    payload = {
        "J": art.eq_objective.j,
        "SE": art.eq_objective.se,
        "n_paths": art.eq_objective.n_paths,
        "gap_vs_equilibrium": [
            {
                "delta_spec": run.delta_spec,
                "J": run.objective.j,
                "SE": run.objective.se,
                "gap": art.eq_objective.j - run.objective.j,
                "predicted_gap": 0.5 * run.delta_sq_mean,
            }
            for run in art.perturbed
        ],
    }
    write_json(out / "objective.json", payload)
    print(f"incentive: J={art.eq_objective.j:.6g} (SE {art.eq_objective.se:.2g}) -> {out}")
    return 0


def cmd_bass(cfg: RunConfig) -> int:
    out = Path(cfg.output_dir)
    mu0 = parse_measure_spec(cfg.mu0_spec, cfg.x_gridspec())
    mu1 = parse_measure_spec(cfg.mu1_spec, cfg.y_gridspec())
    model = bass_build(mu1)
    ens = bass_simulate(model, mu0, TimeGrid(cfg.n_steps), cfg.n_paths, cfg.seed)
    _write_ensemble(out, "bass_paths", ens, DEFAULT_CSV_PATHS)
    terminal = ens.terminal()
    mean_x1 = float(terminal.samples.mean())
    se = float(terminal.samples.std(ddof=1) / np.sqrt(ens.n_paths))
    report = {
        "c": model.c,
        "terminal_w1": wasserstein1(terminal, mu1),
        "terminal_ks": ks_statistic(terminal, mu1),
        "mean_x1": mean_x1,
        "mean_x1_se": se,
        "second_moment_x1": float(np.mean(terminal.samples**2)),
        "second_moment_target": mu1.second_moment(),
    }
    write_json(out / "bass_report.json", report)
    print(f"bass: c={model.c:.6g} terminal W1={report['terminal_w1']:.4g} -> {out}")
    return 0


def cmd_verify(cfg: RunConfig) -> int:
    out = Path(cfg.output_dir)
    art = full_report(cfg)
    report = art.report
    write_json(out / "report.json", report.to_dict())
    plots.terminal_histogram(art.equilibrium.x[:, -1], art.mu1, out / "terminal_hist.svg")
    ts, xs = _drift_lattice(cfg, art.mu1)
    x0 = float(art.mu0.nodes[np.argmax(art.mu0.w)])
    beta = np.stack([art.field.drift_eval(t, x0, xs) for t in ts])
    plots.drift_heatmap(ts, xs, beta, out / "drift_heatmap.svg", x0)
    plots.xi_histogram(art.xi.xi, out / "xi_hist.svg")
    d = report.to_dict()
    for name, ok in [("planning", d["planning"]["pass"]), ("entropy", d["entropy"]["pass"])] + [
        (f"gap[{g['delta_spec']}]", g["pass"]) for g in d["gap"]
    ]:
        print(f"verify: {name}: {'PASS' if ok else 'FAIL'}")
    print(f"verify: {'ALL PASS' if report.all_pass else 'FAILED'} -> {out / 'report.json'}")
    return 0 if report.all_pass else 1


def cmd_plot(cfg: RunConfig) -> int:
    out = Path(cfg.output_dir)
    made = []
    paths_csv = out / "paths.csv"
    if paths_csv.exists():
        data = np.genfromtxt(paths_csv, delimiter=",", names=True)
        k_max = data["k"].max()
        terminal = data["x"][data["k"] == k_max]
        mu1 = parse_measure_spec(cfg.mu1_spec, cfg.y_gridspec())
        made.append(plots.terminal_histogram(terminal, mu1, out / "terminal_hist.svg"))
    drift_csv = out / "drift.csv"
    if drift_csv.exists():
        data = np.genfromtxt(drift_csv, delimiter=",", names=True)
        x0s = np.unique(data["x0"])
        x0 = x0s[np.argmin(np.abs(x0s))]
        sel = data[data["x0"] == x0]
        ts = np.unique(sel["t"])
        xs = np.unique(sel["x"])
        beta = sel["beta"].reshape(ts.size, xs.size)
        made.append(plots.drift_heatmap(ts, xs, beta, out / "drift_heatmap.svg", float(x0)))
    xi_csv = out / "xi.csv"
    if xi_csv.exists():
        data = np.genfromtxt(xi_csv, delimiter=",", names=True)
        made.append(plots.xi_histogram(data["xi"], out / "xi_hist.svg"))
    if not made:
        print("plot: no CSV artifacts found; run a stage first", file=sys.stderr)
        return 1
    print("plot: wrote " + ", ".join(str(p) for p in made))
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = _build_parser().parse_args(argv)
    try:
        cfg = _load(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "bridge":
            return cmd_bridge(cfg)
        if args.command == "drift":
            return cmd_drift(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.csv_paths)
        if args.command == "incentive":
            return cmd_incentive(cfg)
        if args.command == "bass":
            return cmd_bass(cfg)
        if args.command == "verify":
            return cmd_verify(cfg)
        if args.command == "plot":
            return cmd_plot(cfg)
    except Exception as exc:  # stage failure: report which stage died
        log.error("%s stage failed: %s", args.command, exc)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
