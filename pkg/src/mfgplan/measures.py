"""Probability measures on uniform 1D grids and as sample clouds.

Grid measures store node *weights* (mass per node, not density values); the
conversion factor to a density is the grid spacing. All objects are immutable
after construction and safe to share across threads.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

log = logging.getLogger(__name__)

SOFT_TRUNCATION = 1e-6   # warn above this much mass outside the grid window
HARD_TRUNCATION = 1e-2   # refuse above this

__all__ = [
    "GridSpec",
    "GridMeasure",
    "EmpiricalMeasure",
    "MeasureSpecError",
    "TruncationError",
    "parse_measure_spec",
    "heat_convolve",
    "wasserstein1",
    "ks_statistic",
    "quantile",
]


class MeasureSpecError(ValueError):
    """Malformed textual measure specification."""


class TruncationError(ValueError):
    """More than HARD_TRUNCATION of the measure's mass falls outside the grid."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on [lo, hi] with n nodes, x_i = lo + i*(hi-lo)/(n-1)."""

    lo: float
    hi: float
    n: int

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"grid requires lo < hi, got [{self.lo}, {self.hi}]")
        if self.n < 2:
            raise ValueError(f"grid requires n >= 2, got n={self.n}")

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / (self.n - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)

    def nearest_index(self, x) -> np.ndarray:
        """Index of the node closest to x (clipped to the grid)."""
        idx = np.rint((np.asarray(x, dtype=float) - self.lo) / self.spacing)
        return np.clip(idx, 0, self.n - 1).astype(np.intp)


@dataclass(frozen=True)
class GridMeasure:
    """Probability measure given by nonnegative node weights summing to one."""

    grid: GridSpec
    w: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.shape != (self.grid.n,):
            raise ValueError(f"weights shape {w.shape} does not match grid n={self.grid.n}")
        if np.any(w < 0):
            raise ValueError("negative node weight")
        total = w.sum()
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {total!r}, not 1")
        w = w.copy()
        w.flags.writeable = False
        object.__setattr__(self, "w", w)

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.nodes

    def cdf_at_nodes(self) -> np.ndarray:
        return np.cumsum(self.w)

    def mean(self) -> float:
        return float(self.nodes @ self.w)

    def second_moment(self) -> float:
        return float((self.nodes**2) @ self.w)


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Uniformly weighted sample cloud."""

    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 1 or s.size == 0:
            raise ValueError("samples must be a non-empty 1D array")
        object.__setattr__(self, "samples", s)

    def mean(self) -> float:
        return float(self.samples.mean())

    def second_moment(self) -> float:
        return float(np.mean(self.samples**2))


def _normalized(grid: GridSpec, raw: np.ndarray, lost_mass: float, what: str) -> GridMeasure:
    """Renormalize raw weights, enforcing the truncation policy."""
    if lost_mass > HARD_TRUNCATION:
        raise TruncationError(
            f"{what}: {lost_mass:.3e} of the mass lies outside [{grid.lo}, {grid.hi}]"
        )
    if lost_mass > SOFT_TRUNCATION:
        log.warning(
            "%s: clipping %.3e of mass outside [%g, %g] and renormalizing",
            what, lost_mass, grid.lo, grid.hi,
        )
    total = raw.sum()
    if total <= 0:
        raise MeasureSpecError(f"{what}: no mass on the grid")
    return GridMeasure(grid, raw / total)


def _gaussian_weights(grid: GridSpec, mean: float, std: float) -> tuple[np.ndarray, float]:
    z = (grid.nodes - mean) / std
    raw = np.exp(-0.5 * z**2)
    lost = ndtr((grid.lo - mean) / std) + ndtr((mean - grid.hi) / std)
    return raw, float(lost)


def _parse_one(spec: str, grid: GridSpec) -> tuple[np.ndarray, float]:
    """Return (raw weights, mass outside the window) for a single spec atom."""
    kind, _, arg = spec.partition(":")
    kind = kind.strip().lower()
    try:
        if kind == "gaussian":
            mean, std = (float(v) for v in arg.split(","))
            if std <= 0:
                raise MeasureSpecError(f"gaussian std must be > 0, got {std}")
            return _gaussian_weights(grid, mean, std)
        if kind == "uniform":
            a, b = (float(v) for v in arg.split(","))
            if not a < b:
                raise MeasureSpecError(f"uniform requires a < b, got {a}, {b}")
            raw = ((grid.nodes >= a) & (grid.nodes <= b)).astype(float)
            inside = (min(b, grid.hi) - max(a, grid.lo)) / (b - a)
            return raw, max(0.0, 1.0 - inside)
        if kind == "point":
            x = float(arg)
            raw = np.zeros(grid.n)
            lost = 0.0
            if grid.lo <= x <= grid.hi:
                raw[grid.nearest_index(x)] = 1.0
            else:
                lost = 1.0
            return raw, lost
        if kind == "twopoint":
            x1, x2, p = (float(v) for v in arg.split(","))
            if not 0 <= p <= 1:
                raise MeasureSpecError(f"twopoint weight must be in [0,1], got {p}")
            raw = np.zeros(grid.n)
            lost = 0.0
            for x, mass in ((x1, p), (x2, 1.0 - p)):
                if grid.lo <= x <= grid.hi:
                    raw[grid.nearest_index(x)] += mass
                else:
                    lost += mass
            return raw, lost
        if kind == "csv":
            xs, ws = _read_measure_csv(arg)
            raw = np.zeros(grid.n)
            inside = (xs >= grid.lo) & (xs <= grid.hi)
            np.add.at(raw, grid.nearest_index(xs[inside]), ws[inside])
            return raw, float(ws[~inside].sum() / ws.sum())
    except MeasureSpecError:
        raise
    except (ValueError, OSError) as exc:
        raise MeasureSpecError(f"malformed measure spec {spec!r}: {exc}") from exc
    raise MeasureSpecError(f"unknown measure spec kind {kind!r} in {spec!r}")


def _read_measure_csv(path: str) -> tuple[np.ndarray, np.ndarray]:
    """CSV measure format: header 'x,weight', rows sorted by x."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:2]] != ["x", "weight"]:
            raise MeasureSpecError(f"{path}: expected header 'x,weight'")
        rows = [(float(r[0]), float(r[1])) for r in reader if r]
    if not rows:
        raise MeasureSpecError(f"{path}: no data rows")
    xs = np.array([r[0] for r in rows])
    ws = np.array([r[1] for r in rows])
    if np.any(np.diff(xs) < 0):
        raise MeasureSpecError(f"{path}: rows must be sorted by x")
    if np.any(ws < 0):
        raise MeasureSpecError(f"{path}: negative weight")
    return xs, ws


def parse_measure_spec(spec: str, grid: GridSpec) -> GridMeasure:
    """Discretize a textual measure spec onto `grid` and renormalize.

    Supported forms: ``gaussian:mean,std``, ``uniform:a,b``, ``point:x``,
    ``twopoint:x1,x2,p``, ``mixture:(spec;weight)(spec;weight)...``,
    ``csv:path``. Mass falling outside the grid window is clipped with a
    logged warning; more than 1% lost mass is an error.
    """
    spec = spec.strip()
    if spec.lower().startswith("mixture:"):
        body = spec[len("mixture:"):].strip()
        parts = []
        while body:
            if not body.startswith("("):
                raise MeasureSpecError(f"mixture components must look like (spec;weight): {spec!r}")
            close = body.index(")") if ")" in body else -1
            if close < 0:
                raise MeasureSpecError(f"unbalanced parenthesis in {spec!r}")
            inner = body[1:close]
            body = body[close + 1:].strip()
            sub, _, wtxt = inner.rpartition(";")
            if not sub:
                raise MeasureSpecError(f"mixture component missing ';weight': ({inner})")
            parts.append((sub.strip(), float(wtxt)))
        if not parts:
            raise MeasureSpecError(f"empty mixture: {spec!r}")
        if any(w < 0 for _, w in parts) or sum(w for _, w in parts) <= 0:
            raise MeasureSpecError(f"mixture weights must be nonnegative with positive sum: {spec!r}")
        wsum = sum(w for _, w in parts)
        raw = np.zeros(grid.n)
        lost = 0.0
        for sub, wmix in parts:
            sub_raw, sub_lost = _parse_one(sub, grid)
            if sub_raw.sum() > 0:
                raw += (wmix / wsum) * sub_raw / sub_raw.sum() * (1.0 - sub_lost)
            lost += (wmix / wsum) * sub_lost
        return _normalized(grid, raw, lost, spec)
    raw, lost = _parse_one(spec, grid)
    return _normalized(grid, raw, lost, spec)


def heat_convolve(mu: GridMeasure, t: float) -> GridMeasure:
    """Convolve with the centered Gaussian of variance t, on the same grid."""
    if t <= 0:
        raise ValueError(f"heat_convolve requires t > 0, got {t}")
    nodes = mu.nodes
    diff = nodes[:, None] - nodes[None, :]
    kernel = np.exp(-diff**2 / (2.0 * t)) / math.sqrt(2.0 * math.pi * t)
    raw = kernel @ mu.w * mu.grid.spacing
    # mass outside the window, for the truncation policy
    std = math.sqrt(t)
    lost = float(mu.w @ (ndtr((mu.grid.lo - nodes) / std) + ndtr((nodes - mu.grid.hi) / std)))
    return _normalized(mu.grid, raw, lost, f"heat_convolve(t={t})")


def _cdf_points(m) -> tuple[np.ndarray, np.ndarray]:
    """Support points and right-limit CDF values of an atomic representation."""
    if isinstance(m, GridMeasure):
        return m.nodes, m.cdf_at_nodes()
    if isinstance(m, EmpiricalMeasure):
        s = np.sort(m.samples)
        return s, np.arange(1, s.size + 1) / s.size
    raise TypeError(f"expected GridMeasure or EmpiricalMeasure, got {type(m).__name__}")


def wasserstein1(a, b) -> float:
    """W1 distance via the integrated |CDF difference| on the merged support."""
    xa, fa = _cdf_points(a)
    xb, fb = _cdf_points(b)
    xs = np.union1d(xa, xb)
    fa_m = np.concatenate([[0.0], fa])[np.searchsorted(xa, xs, side="right")]
    fb_m = np.concatenate([[0.0], fb])[np.searchsorted(xb, xs, side="right")]
    return float(np.sum(np.abs(fa_m[:-1] - fb_m[:-1]) * np.diff(xs)))


def _grid_cdf(mu: GridMeasure, x: np.ndarray) -> np.ndarray:
    """Piecewise-linear CDF through (node_i, cumulative weight_i).

    The linear interpolation treats the grid measure as the discretization of
    a continuous law, which keeps the KS statistic free of half-atom jumps.
    """
    return np.interp(x, mu.nodes, mu.cdf_at_nodes(), left=0.0, right=1.0)


def ks_statistic(a: EmpiricalMeasure, b: GridMeasure) -> float:
    """Kolmogorov-Smirnov distance between samples and a grid measure."""
    s = np.sort(a.samples)
    n = s.size
    fb = _grid_cdf(b, s)
    upper = np.arange(1, n + 1) / n - fb
    lower = fb - np.arange(0, n) / n
    return float(max(upper.max(), lower.max(), 0.0))


def quantiles(mu: GridMeasure, ps) -> np.ndarray:
    """Generalized inverse CDF at an array of levels.

    Atoms are hit exactly (the inverse is the left-continuous step inverse);
    across contiguous runs of positive-weight nodes the inverse interpolates
    linearly through the mass-centered cumulative (node i carries its weight
    split around x_i), which keeps stratified sampling unbiased for smooth
    densities.
    """
    ps = np.asarray(ps, dtype=float)
    if np.any((ps <= 0) | (ps >= 1)):
        raise ValueError("quantile levels must be in (0,1)")
    w = mu.w
    cdf = mu.cdf_at_nodes()
    centered = cdf - 0.5 * w
    nodes = mu.nodes
    n = mu.grid.n
    i = np.minimum(np.searchsorted(cdf, ps, side="left"), n - 1)
    out = nodes[i].copy()

    left = np.maximum(i - 1, 0)
    use_left = (ps < centered[i]) & (i > 0) & (w[left] > 0) & (w[i] > 0)
    gap = centered[i] - centered[left]
    frac = np.where(gap > 0, (ps - centered[left]) / np.where(gap > 0, gap, 1.0), 1.0)
    out = np.where(use_left, nodes[left] + np.clip(frac, 0, 1) * (nodes[i] - nodes[left]), out)

    right = np.minimum(i + 1, n - 1)
    use_right = (ps > centered[i]) & (i < n - 1) & (w[right] > 0) & (w[i] > 0) & ~use_left
    gap = centered[right] - centered[i]
    frac = np.where(gap > 0, (ps - centered[i]) / np.where(gap > 0, gap, 1.0), 0.0)
    out = np.where(use_right, nodes[i] + np.clip(frac, 0, 1) * (nodes[right] - nodes[i]), out)
    return out


def quantile(mu: GridMeasure, p: float) -> float:
    """Scalar form of `quantiles`."""
    return float(quantiles(mu, np.array([p]))[0])
