"""Equilibrium drift synthesized from a bridge coupling.

The coupling density zeta defines a positive martingale
M(t, x0, x) = sum_j zeta(x0, y_j) * N(x, h(1-t))-mass(y_j); the equilibrium
drift is h * d/dx log M, evaluated here as a softmax-weighted average of
(y_j - x)/(1 - t). The drift is conditioned on the initial node because the
coupling density depends on the whole pair (X0, X1).

Two evaluation paths coexist: an exact log-sum-exp form used for diagnostics
and closed-form checks, and a per-time lattice table (two matrix products
plus linear interpolation) that the simulator and the incentive evaluators
share so that path functionals reproduce simulated drifts bitwise.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .schrodinger import Coupling

log = logging.getLogger(__name__)

__all__ = ["DriftField", "log_m", "drift_eval"]

DEFAULT_T_CAP = 1.0 - 1e-4
LATTICE_REFINE = 1       # lattice spacing = y spacing / LATTICE_REFINE
LATTICE_MARGIN = 8       # extra y-spacings appended on each side
TABLE_CACHE_BYTES = 256 << 20


@dataclass
class DriftField:
    """Evaluator of the equilibrium drift beta(t, x0, x) for one coupling."""

    coupling: Coupling
    t_cap: float = DEFAULT_T_CAP
    _pos_rows: np.ndarray = field(init=False, repr=False)
    _row_of_node: np.ndarray = field(init=False, repr=False)
    _log_zeta: np.ndarray = field(init=False, repr=False)
    _zeta_scaled: np.ndarray = field(init=False, repr=False)
    _lattice: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not 0.0 < self.t_cap < 1.0:
            raise ValueError(f"t_cap must be in (0,1), got {self.t_cap}")
        mu0 = self.coupling.ref.mu0
        self._pos_rows = np.flatnonzero(mu0.w > 0)
        self._row_of_node = np.full(mu0.grid.n, -1, dtype=np.intp)
        self._row_of_node[self._pos_rows] = np.arange(self._pos_rows.size)
        lz = self.coupling.log_zeta()[self._pos_rows]
        self._log_zeta = lz
        scaled = np.exp(lz - lz.max(axis=1, keepdims=True))
        ys = self.ys
        # stacked [zeta; zeta * y]: one product yields kernel mass and mean
        self._zeta_scaled = np.concatenate([scaled, scaled * ys[None, :]], axis=0)
        dy = self.coupling.ref.x1_grid.spacing
        pad = LATTICE_MARGIN * dy
        n_lat = (self.coupling.ref.x1_grid.n - 1) * LATTICE_REFINE + 2 * LATTICE_MARGIN * LATTICE_REFINE + 1
        self._lattice = ys[0] - pad + np.arange(n_lat) * (dy / LATTICE_REFINE)
        self._sq_dist = (ys[:, None] - self._lattice[None, :]) ** 2
        self._cache: dict[float, np.ndarray] = {}
        self._cache_order: list[float] = []
        self._cache_bytes = 0

    @property
    def ys(self) -> np.ndarray:
        return self.coupling.ref.x1_grid.nodes

    @property
    def horizon(self) -> float:
        return self.coupling.ref.horizon

    def row_index(self, x0) -> np.ndarray:
        """Positive-mass row for an initial point, by nearest-node snap."""
        scalar = np.ndim(x0) == 0
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        grid = self.coupling.ref.x0_grid
        idx = grid.nearest_index(x0)
        snap = np.abs(grid.nodes[idx] - x0)
        if np.any(snap > grid.spacing / 2 + 1e-12):
            log.warning("initial point snapped by more than half a spacing (max %.3g)", snap.max())
        rows = self._row_of_node[idx]
        if np.any(rows < 0):
            bad = x0[rows < 0]
            raise ValueError(f"initial point {bad[0]!r} snaps to a zero-mass node")
        return rows[0] if scalar else rows

    def _check_t(self, t: float) -> float:
        if not 0.0 <= t <= self.t_cap + 1e-15:
            raise ValueError(f"drift evaluation time {t} outside [0, {self.t_cap}]")
        return min(t, self.t_cap)

    def _log_weights(self, t: float, row: int, x) -> np.ndarray:
        s = self.horizon * (1.0 - t)
        x = np.asarray(x, dtype=float)
        return self._log_zeta[row] - (self.ys - x[..., None]) ** 2 / (2.0 * s)

    def log_m(self, t: float, x0: float, x):
        """log M(t, x0, x), the conditional expectation of zeta given X_t = x."""
        t = self._check_t(t)
        row = int(self.row_index(x0))
        s = self.horizon * (1.0 - t)
        lw = self._log_weights(t, row, x)
        const = math.log(self.coupling.ref.x1_grid.spacing) - 0.5 * math.log(2.0 * math.pi * s)
        out = logsumexp(lw, axis=-1) + const
        return float(out) if np.ndim(x) == 0 else out

    def drift_eval(self, t: float, x0: float, x):
        """Equilibrium drift at (t, x0, x): softmax average of (y - x)/(1 - t)."""
        t = self._check_t(t)
        row = int(self.row_index(x0))
        lw = self._log_weights(t, row, x)
        w = np.exp(lw - lw.max(axis=-1, keepdims=True))
        x = np.asarray(x, dtype=float)
        num = (w * (self.ys - x[..., None])).sum(axis=-1)
        out = num / w.sum(axis=-1) / (1.0 - t)
        return float(out) if np.ndim(x) == 0 else out

    def drift_table(self, t: float) -> np.ndarray:
        """Drift on (positive rows x lattice) via one scaled-kernel product.

        Tables are cached per evaluation time (bounded by TABLE_CACHE_BYTES)
        so that incentive and entropy passes over an ensemble reuse the
        simulator's tables instead of rebuilding them.
        """
        t = self._check_t(t)
        cached = self._cache.get(t)
        if cached is not None:
            return cached
        s = self.horizon * (1.0 - t)
        lat = self._lattice
        phi = np.exp(self._sq_dist * (-0.5 / s))
        mn = self._zeta_scaled @ phi
        n_pos = self._pos_rows.size
        with np.errstate(invalid="ignore", divide="ignore"):
            table = (mn[n_pos:] / mn[:n_pos] - lat[None, :]) / (1.0 - t)
        if table.nbytes <= TABLE_CACHE_BYTES:
            while self._cache_bytes + table.nbytes > TABLE_CACHE_BYTES and self._cache_order:
                old = self._cache_order.pop(0)
                self._cache_bytes -= self._cache.pop(old).nbytes
            self._cache[t] = table
            self._cache_order.append(t)
            self._cache_bytes += table.nbytes
        return table

    def eval_paths(self, t: float, rows: np.ndarray, x: np.ndarray,
                   table: np.ndarray | None = None) -> np.ndarray:
        """Drift for many paths at one time, matching the simulator bitwise.

        Linear interpolation of the per-row lattice table; the rare positions
        where the table is not finite (deep tails at late times) fall back to
        the exact log-domain evaluation.
        """
        if table is None:
            table = self.drift_table(t)
        lat = self._lattice
        dlat = lat[1] - lat[0]
        pos = np.clip((x - lat[0]) / dlat, 0.0, lat.size - 1.000001)
        idx = pos.astype(np.intp)
        theta = pos - idx
        left = table[rows, idx]
        right = table[rows, idx + 1]
        out = left * (1.0 - theta) + right * theta
        bad = ~np.isfinite(out)
        if np.any(bad):
            t_eff = self._check_t(t)
            for p in np.flatnonzero(bad):
                lw = self._log_weights(t_eff, rows[p], x[p])
                w = np.exp(lw - lw.max())
                out[p] = (w * (self.ys - x[p])).sum() / w.sum() / (1.0 - t_eff)
        return out


def log_m(field_: DriftField, t: float, x0: float, x):
    """Module-level alias of DriftField.log_m."""
    return field_.log_m(t, x0, x)


def drift_eval(field_: DriftField, t: float, x0: float, x):
    """Module-level alias of DriftField.drift_eval."""
    return field_.drift_eval(t, x0, x)
