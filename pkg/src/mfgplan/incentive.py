"""Path-dependent incentive functionals and Monte Carlo objectives.

The planning rewards have the common shape
    xi = y0 + int Z dX - int H(Z, m_t) dt
evaluated per path with left-point Riemann sums. In the linear-quadratic
case Z is the equilibrium drift itself and H(z, m) = z^2/2 - f(m); for a
general convex running cost, Z comes from inverting the drift through the
sub-gradient of the Hamiltonian. The drift values are re-evaluated with the
same lattice tables the simulator used, so the algebraic identities between
simulation and evaluation hold to floating-point precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter1d

from . import parallel
from .drift import DriftField
from .hamiltonian import ControlSet, Cost2Spec, CostSpec, hamiltonian_eval, invert_drift_to_z
from .simulate import PathEnsemble, parse_delta_spec

__all__ = [
    "IncentiveValues",
    "ObjectiveResult",
    "incentive_lq",
    "incentive_drift",
    "incentive_second_order",
    "objective_j",
]

SIGMA_SQ_WINDOW = 10


@dataclass(frozen=True)
class IncentiveValues:
    """Per-path reward xi = y0 + stoch_int - quad_term + mf_term."""

    xi: np.ndarray = field(repr=False)
    stoch_int: np.ndarray = field(repr=False)
    quad_term: np.ndarray = field(repr=False)
    mf_term: np.ndarray = field(repr=False)
    y0: float = 0.0

    def shifted(self, dy0: float) -> "IncentiveValues":
        return IncentiveValues(self.xi + dy0, self.stoch_int, self.quad_term,
                               self.mf_term, self.y0 + dy0)


@dataclass(frozen=True)
class ObjectiveResult:
    """Monte Carlo objective estimate with its standard error."""

    j: float
    se: float
    n_paths: int


def _mf_values(cost: CostSpec, flow, n_steps: int) -> np.ndarray:
    """f(m_{t_k}) at the left endpoints; flow holds all grid-time sections."""
    if cost.mf_kind == "zero":
        return np.zeros(n_steps)
    if flow is None or len(flow) < n_steps:
        raise ValueError("mean-field term requires the flow at every grid time")
    return np.array([cost.mf_value(flow[k]) for k in range(n_steps)])


def _check_grid(ens: PathEnsemble, flow) -> None:
    if flow is not None and len(flow) not in (0, ens.time.n_steps + 1):
        raise ValueError(
            f"flow has {len(flow)} sections, ensemble expects {ens.time.n_steps + 1}"
        )


def _accumulate(ens: PathEnsemble, field_: DriftField, per_step, threads=None) -> None:
    """Walk the ensemble once, calling per_step(k, beta_k, dx_k, lo, hi) chunked."""
    rows = field_.row_index(ens.x0)
    dt = ens.time.dt
    for k in range(ens.time.n_steps):
        t_eval = min(k * dt, field_.t_cap)
        table = field_.drift_table(t_eval)
        cur = ens.x[:, k]
        dx = ens.x[:, k + 1] - cur

        def work(lo, hi):
            beta = field_.eval_paths(t_eval, rows[lo:hi], cur[lo:hi], table=table)
            per_step(k, beta, dx[lo:hi], lo, hi)

        parallel.chunked(ens.n_paths, work, threads)


def incentive_lq(
    ens: PathEnsemble,
    field_: DriftField,
    cost: CostSpec,
    flow,
    y0: float = 0.0,
    threads=None,
) -> IncentiveValues:
    """Linear-quadratic reward: xi = y0 + sum beta dX - sum (beta^2/2 - f) dt."""
    if cost.kind != "quadratic":
        raise ValueError("incentive_lq requires the quadratic cost")
    _check_grid(ens, flow)
    dt = ens.time.dt
    n = ens.n_paths
    f_vals = _mf_values(cost, flow, ens.time.n_steps)
    stoch = np.zeros(n)
    quad = np.zeros(n)

    def per_step(k, beta, dx, lo, hi):
        stoch[lo:hi] += beta * dx
        quad[lo:hi] += 0.5 * beta**2 * dt

    _accumulate(ens, field_, per_step, threads)
    mf = np.full(n, f_vals.sum() * dt)
    return IncentiveValues(y0 + stoch - quad + mf, stoch, quad, mf, y0)


def incentive_drift(
    ens: PathEnsemble,
    field_: DriftField,
    cost: CostSpec,
    U: ControlSet,
    flow,
    y0: float = 0.0,
    threads=None,
) -> IncentiveValues:
    """Reward xi = y0 + sum Z dX - sum H(Z, m_t) dt with Z inverted from the drift."""
    _check_grid(ens, flow)
    dt = ens.time.dt
    n = ens.n_paths
    f_vals = _mf_values(cost, flow, ens.time.n_steps)
    stoch = np.zeros(n)
    ham = np.zeros(n)

    def per_step(k, beta, dx, lo, hi):
        z = invert_drift_to_z(cost, U, beta)
        h0 = z * beta - cost.base(beta)
        stoch[lo:hi] += z * dx
        ham[lo:hi] += h0 * dt

    _accumulate(ens, field_, per_step, threads)
    mf = np.full(n, f_vals.sum() * dt)
    return IncentiveValues(y0 + stoch - ham + mf, stoch, ham, mf, y0)


def estimate_sigma_sq(ens: PathEnsemble, window: int = SIGMA_SQ_WINDOW) -> np.ndarray:
    """Quadratic-variation rate (dX_k)^2/dt smoothed over a step window."""
    sq = np.diff(ens.x, axis=1) ** 2 / ens.time.dt
    if window > 1:
        sq = uniform_filter1d(sq, size=window, axis=1, mode="nearest")
    return sq


def _parse_process_spec(spec) -> tuple[str, float]:
    if isinstance(spec, (int, float)):
        return "const", float(spec)
    text = str(spec).strip()
    if text == "cm_sigma2":
        return "cm_sigma2", 0.0
    kind, _, arg = text.partition(":")
    if kind == "const":
        return "const", float(arg)
    raise ValueError(f"unknown process spec {spec!r}; use 'const:v' or 'cm_sigma2'")


def incentive_second_order(
    paths: PathEnsemble,
    z_spec,
    gamma_spec,
    cost2: Cost2Spec,
    flow,
    y0: float = 0.0,
    window: int = SIGMA_SQ_WINDOW,
) -> IncentiveValues:
    """Reward for controlled volatility: Y1 = int Z dX + int (G:sigma^2/2 - H) dt.

    Z and Gamma are given as process specs: a constant ('const:v') or, for
    Gamma, 'cm_sigma2' meaning Gamma_t = C_{m_t} * sigma_t^2 (the maximizing
    choice for the quarter-quadratic cost). sigma^2 is estimated per step
    from squared increments, smoothed over `window` steps. The flow must
    cover every grid time.
    """
    if flow is None or len(flow) != paths.time.n_steps + 1:
        raise ValueError("incentive_second_order requires the flow at every grid time")
    z_kind, z_val = _parse_process_spec(z_spec)
    g_kind, g_val = _parse_process_spec(gamma_spec)
    if z_kind != "const":
        raise ValueError("only constant Z processes are supported")
    dt = paths.time.dt
    sig_sq = estimate_sigma_sq(paths, window)
    if not np.all(np.isfinite(sig_sq)):
        raise ValueError("non-finite quadratic-variation estimate")
    n = paths.n_paths
    stoch = np.zeros(n)
    correction = np.zeros(n)
    for k in range(paths.time.n_steps):
        c_m = cost2.c_m(flow[k])
        gamma = c_m * sig_sq[:, k] if g_kind == "cm_sigma2" else np.full(n, g_val)
        h, _ = hamiltonian2_eval(cost2, z_val, gamma, flow[k])
        dx = paths.x[:, k + 1] - paths.x[:, k]
        stoch += z_val * dx
        correction += (0.5 * gamma * sig_sq[:, k] - h) * dt
    xi = y0 + stoch + correction
    return IncentiveValues(xi, stoch, -correction, np.zeros(n), y0)


def objective_j(
    xi: IncentiveValues,
    ens: PathEnsemble,
    field_: DriftField,
    cost: CostSpec,
    flow,
    threads=None,
) -> ObjectiveResult:
    """J = E[xi - int (c(beta^P) + f(m_t)) dt] under the ensemble's own drift.

    beta^P is the drift the ensemble was simulated with: the equilibrium
    drift plus the recorded perturbation, or zero for Wiener ensembles. The
    mean-field flow is the frozen equilibrium flow passed by the caller.
    """
    if xi.xi.shape[0] != ens.n_paths:
        raise ValueError("incentive values were computed on a different ensemble")
    _check_grid(ens, flow)
    dt = ens.time.dt
    n = ens.n_paths
    f_vals = _mf_values(cost, flow, ens.time.n_steps)
    running = np.zeros(n)

    if ens.drift_used == "zero":
        running += float(cost.base(0.0))  # beta^P identically zero over [0, 1]
    elif ens.drift_used == "equilibrium" or ens.drift_used.startswith("perturbed:"):
        delta = None
        if ens.drift_used.startswith("perturbed:"):
            delta = parse_delta_spec(ens.drift_used.split(":", 1)[1])

        def per_step(k, beta, dx, lo, hi):
            if delta is not None:
                beta = beta + delta(k * dt, ens.x[lo:hi, k])
            running[lo:hi] += cost.base(beta) * dt

        _accumulate(ens, field_, per_step, threads)
    else:
        raise ValueError(f"objective undefined for drift tag {ens.drift_used!r}")

    j_paths = xi.xi - running - f_vals.sum() * dt
    j = float(j_paths.mean())
    se = float(j_paths.std(ddof=1) / np.sqrt(n))
    return ObjectiveResult(j, se, n)
