"""Semimartingales with prescribed initial and terminal laws.

The construction maps a standard Brownian endpoint through the target's
quantile function, T(x) = quantile(mu1, Phi(x)), so T(B_1) has law mu1
exactly. Because grid measures are atomic, T is a staircase with jumps J_k
at thresholds a_k = Phi^{-1}(cumulative mass); the martingale heat extension
u(t, x) = E[T(x + B_{1-t})] and its space derivative sigma(t, x) then have
exact closed forms as sums of Gaussian CDF/PDF terms, which this module
evaluates directly. The drift (c - X_0) transports any initial law to the
common mean c = int x mu1(dx) while the martingale part delivers the target
shape.

The time-change map W_{tau ^ t/(1-t)} turns an externally supplied stopping
rule on a Brownian clock into a [0, 1] martingale with terminal law W_tau.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from . import _rng
from .measures import GridMeasure
from .simulate import PathEnsemble, TimeGrid, stratified_initials

__all__ = ["BassModel", "bass_build", "bass_simulate", "time_change_embed", "simulate_brownian"]

T_CAP = 1.0 - 1e-4


@dataclass(frozen=True)
class BassModel:
    """Quantile-transform data: T(x) = level0 + sum_k jumps[k] * 1{x > thresholds[k]}."""

    mu1: GridMeasure
    c: float
    level0: float
    thresholds: np.ndarray = field(repr=False)
    jumps: np.ndarray = field(repr=False)

    def transport(self, x) -> np.ndarray:
        """T(x): the terminal quantile map."""
        x = np.asarray(x, dtype=float)
        return self.level0 + (x[..., None] > self.thresholds) @ self.jumps

    def u(self, t, x) -> np.ndarray:
        """Heat extension u(t, x) = E[T(x + B_{1-t})], exact in closed form."""
        t = np.asarray(t, dtype=float)
        if np.any((t < 0) | (t > T_CAP)):
            raise ValueError(f"u is tabulated on t in [0, {T_CAP}]")
        s = np.sqrt(1.0 - t)
        x = np.asarray(x, dtype=float)
        z = (x[..., None] - self.thresholds) / s[..., None]
        return self.level0 + ndtr(z) @ self.jumps

    def sigma(self, t, x) -> np.ndarray:
        """Martingale-representation volatility sigma(t, x) = d/dx u(t, x)."""
        t = np.asarray(t, dtype=float)
        if np.any((t < 0) | (t > T_CAP)):
            raise ValueError(f"sigma is tabulated on t in [0, {T_CAP}]")
        s = np.sqrt(1.0 - t)
        x = np.asarray(x, dtype=float)
        z = (x[..., None] - self.thresholds) / s[..., None]
        dens = np.exp(-0.5 * z**2) / math.sqrt(2.0 * math.pi)
        return (dens @ self.jumps) / s


def bass_build(mu1: GridMeasure) -> BassModel:
    """Assemble the quantile-transform model for a target grid measure.

    Degenerate (single-atom) targets are allowed: the volatility vanishes
    and the drift alone carries the mass to the atom.
    """
    support = np.flatnonzero(mu1.w > 0)
    levels = mu1.nodes[support]
    cum = np.cumsum(mu1.w[support])
    if support.size == 1:
        thresholds = np.empty(0)
        jumps = np.empty(0)
    else:
        inner = np.clip(cum[:-1], 1e-15, 1.0 - 1e-15)
        thresholds = ndtri(inner)
        jumps = np.diff(levels)
    return BassModel(
        mu1=mu1,
        c=mu1.mean(),
        level0=float(levels[0]),
        thresholds=thresholds,
        jumps=jumps,
    )


def bass_simulate(
    model: BassModel, mu0: GridMeasure, tg: TimeGrid, n_paths: int, seed: int
) -> PathEnsemble:
    """Euler scheme for X_t = X_0 + int (c - X_0) ds + int sigma(s, B_s) dB_s.

    The auxiliary Brownian path B is simulated exactly from its increments;
    sigma is evaluated on a per-step lattice fine enough to resolve its
    width sqrt(1 - t) and linearly interpolated at the path positions.
    """
    if n_paths < 100:
        raise ValueError(f"need n_paths >= 100, got {n_paths}")
    dt = tg.dt
    root_dt = math.sqrt(dt)
    x0 = stratified_initials(mu0, n_paths, seed)
    x = np.empty((n_paths, tg.n_steps + 1))
    x[:, 0] = x0
    drift = (model.c - x0) * dt
    b = np.zeros(n_paths)
    for k in range(tg.n_steps):
        t = min(k * dt, T_CAP)
        g = _rng.step_normals(seed, k, n_paths, purpose=_rng.AUX_BROWNIAN)
        db = root_dt * g
        if model.thresholds.size == 0:
            sig = np.zeros(n_paths)
        elif model.thresholds.size <= 64:
            sig = model.sigma(t, b)
        else:
            width = math.sqrt(1.0 - t)
            lo = min(b.min(), model.thresholds.min()) - 1.0
            hi = max(b.max(), model.thresholds.max()) + 1.0
            step = min(0.02, width / 8.0)
            lattice = np.arange(lo, hi + step, step)
            sig_lat = model.sigma(t, lattice)
            sig = np.interp(b, lattice, sig_lat)
        x[:, k + 1] = x[:, k] + drift + sig * db
        b = b + db
    return PathEnsemble(tg, x, x0, seed, "bass")


def simulate_brownian(
    mu0: GridMeasure | float, tg: TimeGrid, n_paths: int, seed: int, horizon: float = 1.0
) -> PathEnsemble:
    """Brownian ensemble over [0, 1] scaled to total variance `horizon`."""
    if isinstance(mu0, GridMeasure):
        x0 = stratified_initials(mu0, n_paths, seed)
    else:
        x0 = np.full(n_paths, float(mu0))
    root = math.sqrt(horizon * tg.dt)
    incs = np.empty((n_paths, tg.n_steps))
    for k in range(tg.n_steps):
        incs[:, k] = root * _rng.step_normals(seed, k, n_paths, purpose=_rng.AUX_BROWNIAN)
    x = np.concatenate([x0[:, None], x0[:, None] + np.cumsum(incs, axis=1)], axis=1)
    return PathEnsemble(tg, x, x0, seed, "zero")


def time_change_embed(
    w_paths: PathEnsemble, tau: np.ndarray, w_horizon: float, out_grid: TimeGrid | None = None
) -> PathEnsemble:
    """Embed stopped Brownian values into [0, 1] via X_t = W(tau ^ t/(1-t)).

    `w_paths` is a Brownian ensemble whose unit time grid represents the
    clock [0, w_horizon]; `tau` holds one stopping value per path and must
    not exceed the simulated horizon. Values between W-grid points are
    linearly interpolated; at t = 1 the embedded path equals W_tau.
    """
    tau = np.asarray(tau, dtype=float)
    if tau.shape != (w_paths.n_paths,):
        raise ValueError("tau must hold one stopping value per path")
    if np.any(tau < 0):
        raise ValueError("stopping values must be nonnegative")
    if np.any(tau > w_horizon * (1 + 1e-12)):
        raise ValueError(f"tau exceeds the simulated horizon {w_horizon}")
    out_grid = out_grid or w_paths.time
    w_times = w_paths.time.times * w_horizon
    n = w_paths.n_paths
    x = np.empty((n, out_grid.n_steps + 1))
    for j, t in enumerate(out_grid.times):
        clock = np.minimum(tau, t / (1.0 - t)) if t < 1.0 else tau
        pos = np.clip(clock / (w_horizon * w_paths.time.dt), 0, w_paths.time.n_steps - 1e-9)
        idx = pos.astype(np.intp)
        theta = pos - idx
        rows = np.arange(n)
        x[:, j] = w_paths.x[rows, idx] * (1.0 - theta) + w_paths.x[rows, idx + 1] * theta
    return PathEnsemble(out_grid, x, x[:, 0].copy(), w_paths.seed, "zero")
