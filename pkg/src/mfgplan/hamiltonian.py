"""Running costs, control sets, and the associated Hamiltonians.

The first-order Hamiltonian is the convex conjugate of the running cost over
the control set, H(z, m) = sup_{b in U} {b z - c(b, m)}; its maximizer
selection drives the equilibrium dynamics, and the inverse map (drift to
adjoint variable) is the convex-duality round trip. The second-order
Hamiltonian covers the example cost c = (1/4) C_m a^2 on U = {0} x [0, inf)
used for martingale embeddings, with C_m = int (1+x^2) m(dx).

All functions are pure; the mean-field argument enters only through scalar
functionals of the measure.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

__all__ = [
    "ControlSet",
    "CostSpec",
    "Cost2Spec",
    "DivergentHamiltonianError",
    "FullRangeError",
    "hamiltonian_eval",
    "argmax_selection",
    "invert_drift_to_z",
    "hamiltonian2_eval",
    "check_quadratic_growth",
    "check_full_range",
]


class DivergentHamiltonianError(ValueError):
    """The supremum defining the Hamiltonian is +infinity."""


class FullRangeError(ValueError):
    """Requested drift is outside the attainable range of the selection map.

    This is the runtime face of the full range condition: the sub-gradient of
    the Hamiltonian must reach the drift value to invert.
    """


@dataclass(frozen=True)
class ControlSet:
    """Closed control domain in dimension one."""

    kind: str                      # "all" | "interval" | "finite_grid"
    lo: float = -math.inf
    hi: float = math.inf
    points: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ("all", "interval", "finite_grid"):
            raise ValueError(f"unknown control set kind {self.kind!r}")
        if self.kind == "interval" and not self.lo < self.hi:
            raise ValueError(f"interval requires lo < hi, got [{self.lo}, {self.hi}]")
        if self.kind == "finite_grid":
            if not self.points:
                raise ValueError("finite_grid requires at least one point")
            if any(nxt <= prev for prev, nxt in zip(self.points, self.points[1:])):
                raise ValueError("finite_grid points must be strictly increasing")

    @classmethod
    def reals(cls) -> "ControlSet":
        return cls("all")

    @classmethod
    def interval(cls, lo: float, hi: float) -> "ControlSet":
        return cls("interval", lo=lo, hi=hi)

    @classmethod
    def finite(cls, points: Sequence[float]) -> "ControlSet":
        return cls("finite_grid", points=tuple(sorted(float(p) for p in points)))

    @classmethod
    def parse(cls, text: str) -> "ControlSet":
        text = text.strip()
        if text in ("R", "r", "all"):
            return cls.reals()
        kind, _, arg = text.partition(":")
        if kind == "interval":
            lo, hi = (float(v) for v in arg.split(","))
            return cls.interval(lo, hi)
        if kind == "grid":
            with open(arg, newline="") as fh:
                reader = csv.reader(fh)
                header = next(reader)
                col = [h.strip().lower() for h in header].index("b")
                pts = [float(row[col]) for row in reader if row]
            return cls.finite(pts)
        raise ValueError(f"unknown control set spec {text!r}")

    def clamp(self, b: float) -> float:
        if self.kind == "all":
            return b
        if self.kind == "interval":
            return min(max(b, self.lo), self.hi)
        pts = np.asarray(self.points)
        return float(pts[np.argmin(np.abs(pts - b))])

    def contains(self, b: float, atol: float = 1e-9) -> bool:
        if self.kind == "all":
            return True
        if self.kind == "interval":
            return self.lo - atol <= b <= self.hi + atol
        return bool(min(abs(p - b) for p in self.points) <= atol)


@dataclass(frozen=True)
class CostSpec:
    """Running cost c(b, m) = base(b) + f(m).

    base is one of: quadratic b^2/2; power lam*|b|^p/p with p > 1 (lam = 0
    degenerates to the zero cost); a table of values over a finite control
    grid. The mean-field term f is zero or kappa * second moment of m.
    """

    kind: str                      # "quadratic" | "power" | "table"
    p: float = 2.0
    lam: float = 1.0
    table_points: tuple[float, ...] = ()
    table_values: tuple[float, ...] = ()
    mf_kind: str = "zero"          # "zero" | "second_moment"
    kappa: float = 0.0

    def __post_init__(self):
        if self.kind not in ("quadratic", "power", "table"):
            raise ValueError(f"unknown cost kind {self.kind!r}")
        if self.kind == "power":
            if self.p <= 1:
                raise ValueError(f"power cost requires p > 1, got {self.p}")
            if self.lam < 0:
                raise ValueError(f"power cost requires lam >= 0, got {self.lam}")
        if self.kind == "table":
            if len(self.table_points) != len(self.table_values) or len(self.table_points) < 1:
                raise ValueError("table cost requires matching points and values")
            pts = np.asarray(self.table_points)
            vals = np.asarray(self.table_values)
            if not np.all(np.isfinite(vals)):
                raise ValueError("table cost values must be finite")
            if pts.size >= 3:
                slopes = np.diff(vals) / np.diff(pts)
                if np.any(np.diff(slopes) < -1e-9):
                    raise ValueError("table cost is not convex on its grid")
        if self.mf_kind not in ("zero", "second_moment"):
            raise ValueError(f"unknown mean-field term {self.mf_kind!r}")

    @classmethod
    def quadratic(cls, mf_kind: str = "zero", kappa: float = 0.0) -> "CostSpec":
        return cls("quadratic", mf_kind=mf_kind, kappa=kappa)

    @classmethod
    def power(cls, p: float, lam: float, mf_kind: str = "zero", kappa: float = 0.0) -> "CostSpec":
        return cls("power", p=p, lam=lam, mf_kind=mf_kind, kappa=kappa)

    @classmethod
    def table(cls, points: Sequence[float], values: Sequence[float]) -> "CostSpec":
        order = np.argsort(points)
        return cls(
            "table",
            table_points=tuple(float(points[i]) for i in order),
            table_values=tuple(float(values[i]) for i in order),
        )

    @classmethod
    def parse(cls, text: str, mf_text: str = "zero") -> "CostSpec":
        mf_kind, kappa = "zero", 0.0
        mf_text = mf_text.strip()
        if mf_text not in ("", "zero"):
            name, _, arg = mf_text.partition(":")
            if name != "second_moment":
                raise ValueError(f"unknown mean-field term spec {mf_text!r}")
            mf_kind, kappa = "second_moment", float(arg)
        text = text.strip()
        if text == "quadratic":
            return cls.quadratic(mf_kind, kappa)
        name, _, arg = text.partition(":")
        if name == "power":
            p, lam = (float(v) for v in arg.split(","))
            return cls.power(p, lam, mf_kind, kappa)
        if name == "table":
            with open(arg, newline="") as fh:
                reader = csv.reader(fh)
                header = [h.strip().lower() for h in next(reader)]
                bi, ci = header.index("b"), header.index("cost")
                rows = [(float(r[bi]), float(r[ci])) for r in reader if r]
            return cls.table([r[0] for r in rows], [r[1] for r in rows])
        raise ValueError(f"unknown cost spec {text!r}")

    def base(self, b):
        """Control-dependent part of the cost, elementwise over b."""
        b = np.asarray(b, dtype=float)
        if self.kind == "quadratic":
            return 0.5 * b**2
        if self.kind == "power":
            return self.lam * np.abs(b) ** self.p / self.p
        return np.interp(b, self.table_points, self.table_values)

    def mf_value(self, m) -> float:
        """Mean-field term f(m); m is a grid or empirical measure (or None)."""
        if self.mf_kind == "zero":
            return 0.0
        if m is None:
            raise ValueError("second_moment mean-field term requires a measure")
        return self.kappa * m.second_moment()


@dataclass(frozen=True)
class Cost2Spec:
    """Second-order example cost c(b, a, m) = (1/4) C_m a^2 on U = {0} x [0, inf).

    C_m = int (1 + x^2) m(dx) >= 1. The associated Hamiltonian has the closed
    form gamma^2 / (4 C_m) for gamma >= 0 and vanishes for gamma < 0.
    """

    def c_m(self, m) -> float:
        return 1.0 + m.second_moment()


def _argmax_base(cost: CostSpec, U: ControlSet, z: np.ndarray) -> np.ndarray:
    """Maximizer of b*z - base(b) over U, elementwise; ties -> smallest |b|."""
    z = np.asarray(z, dtype=float)
    if U.kind == "finite_grid" or cost.kind == "table":
        pts = np.asarray(U.points if U.kind == "finite_grid" else cost.table_points)
        if cost.kind == "table" and U.kind == "finite_grid":
            pts = np.asarray(sorted(set(U.points) & set(cost.table_points)))
            if pts.size == 0:
                raise ValueError("control grid and cost table share no points")
        if U.kind == "interval":
            pts = pts[(pts >= U.lo) & (pts <= U.hi)]
            if pts.size == 0:
                raise ValueError("cost table has no points inside the control interval")
        vals = z[..., None] * pts - cost.base(pts)
        vmax = vals.max(axis=-1, keepdims=True)
        tol = 1e-12 * np.maximum(1.0, np.abs(vmax))
        tied = vals >= vmax - tol
        # tie-break smallest |b| then smallest b: order candidates accordingly
        order = np.lexsort((pts, np.abs(pts)))
        first = np.argmax(tied[..., order], axis=-1)
        return pts[order][first]
    if cost.kind == "quadratic":
        root = z
    else:  # power
        if cost.lam == 0.0:
            if U.kind == "all":
                out = np.where(z == 0.0, 0.0, np.nan)
                if np.any(np.isnan(out)):
                    raise DivergentHamiltonianError("zero cost on an unbounded control set")
                return out
            lo_best = np.where(np.abs(U.lo) <= np.abs(U.hi), U.lo, U.hi)
            inner = 0.0 if U.lo <= 0.0 <= U.hi else lo_best
            return np.where(z > 0, U.hi, np.where(z < 0, U.lo, inner))
        root = np.sign(z) * (np.abs(z) / cost.lam) ** (1.0 / (cost.p - 1.0))
    if U.kind == "interval":
        return np.clip(root, U.lo, U.hi)
    return root


def hamiltonian_eval(cost: CostSpec, U: ControlSet, z: float, m=None) -> float:
    """H(z, m) = sup_{b in U} {b z - c(b, m)}."""
    b = _argmax_base(cost, U, np.asarray(z, dtype=float))
    h = b * np.asarray(z, dtype=float) - cost.base(b) - cost.mf_value(m)
    if not np.all(np.isfinite(h)):
        raise DivergentHamiltonianError(f"Hamiltonian diverges at z={z}")
    return float(h) if np.ndim(z) == 0 else h


def argmax_selection(cost: CostSpec, U: ControlSet, z: float, m=None) -> float:
    """One maximizer of b z - c(b, m) over U; ties broken by smallest |b|, then b."""
    b = _argmax_base(cost, U, np.asarray(z, dtype=float))
    if not np.all(np.isfinite(b)):
        raise DivergentHamiltonianError(f"no finite maximizer at z={z}")
    return float(b) if np.ndim(z) == 0 else b


def invert_drift_to_z(cost: CostSpec, U: ControlSet, beta: float, m=None) -> float:
    """Find Z with beta in the sub-gradient of H(., m) at Z.

    For smooth strictly convex costs this is Z = c'(beta); for table costs Z
    is taken inside the sub-differential of the cost at the matching grid
    point. Raises FullRangeError when beta is not attainable by the
    selection map (the full range condition fails at this drift value).
    """
    scalar = np.ndim(beta) == 0
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    if U.kind == "interval" and (np.any(beta < U.lo - 1e-9) or np.any(beta > U.hi + 1e-9)):
        raise FullRangeError("drift outside the control interval")
    if cost.kind == "quadratic":
        z = beta.copy()
    elif cost.kind == "power":
        if cost.lam == 0.0:
            z = _invert_zero_cost(U, beta)
        else:
            z = cost.lam * np.sign(beta) * np.abs(beta) ** (cost.p - 1.0)
    else:
        z = _invert_table(cost, beta)
    check = _argmax_base(cost, U, z)
    bad = np.abs(check - beta) > 1e-8 * np.maximum(1.0, np.abs(beta))
    if np.any(bad):
        raise FullRangeError(
            f"drift {beta[bad][0]!r} is outside the attainable range of the selection "
            "(full range condition violated)"
        )
    return float(z[0]) if scalar else z


def _invert_zero_cost(U: ControlSet, beta: np.ndarray) -> np.ndarray:
    if U.kind == "all":
        if np.any(beta != 0.0):
            raise FullRangeError("zero cost on the reals only attains drift 0")
        return np.zeros_like(beta)
    z = np.zeros_like(beta)
    z[np.abs(beta - U.hi) <= 1e-12] = 1.0
    z[np.abs(beta - U.lo) <= 1e-12] = -1.0
    return z


def _invert_table(cost: CostSpec, beta: np.ndarray) -> np.ndarray:
    pts = np.asarray(cost.table_points)
    vals = np.asarray(cost.table_values)
    idx = np.argmin(np.abs(pts[None, :] - beta[:, None]), axis=1)
    if np.any(np.abs(pts[idx] - beta) > 1e-9 * np.maximum(1.0, np.abs(beta))):
        raise FullRangeError("drift is not a point of the cost table grid")
    if pts.size == 1:
        return np.zeros_like(beta)
    slopes = np.diff(vals) / np.diff(pts)
    left = np.where(idx > 0, slopes[np.maximum(idx - 1, 0)], slopes[0] - 1.0)
    right = np.where(idx < pts.size - 1, slopes[np.minimum(idx, slopes.size - 1)], slopes[-1] + 1.0)
    return 0.5 * (left + right)


def hamiltonian2_eval(cost2: Cost2Spec, z: float, gamma: float, m) -> tuple[float, float]:
    """Second-order Hamiltonian for the quarter-quadratic diffusion cost.

    Returns (H, a_hat) with H = sup_{a >= 0} {a gamma / 2 - C_m a^2 / 4}
    = gamma^2 / (4 C_m) and maximizer a_hat = gamma / C_m for gamma >= 0;
    the supremum over a >= 0 gives (0, 0) for gamma < 0. The z slot is
    inert because the control set pins the drift component to zero.
    """
    c_m = cost2.c_m(m)
    gamma_plus = np.maximum(np.asarray(gamma, dtype=float), 0.0)
    h = gamma_plus**2 / (4.0 * c_m)
    a_hat = gamma_plus / c_m
    if np.ndim(gamma) == 0:
        return float(h), float(a_hat)
    return h, a_hat


def check_quadratic_growth(
    cost: CostSpec, U: ControlSet, z_samples: Sequence[float], m=None
) -> tuple[float, float, bool]:
    """Probe |selection(z)| >= C1 |z| - C2 on the samples.

    Fits the asymptotic growth exponent of the selection on the larger half
    of |z| and accepts only (near-)linear growth; the returned (C1, C2) are
    the largest constants consistent with every sample. ok=False means no
    C1 >= 1e-6 with linear growth fits, reported honestly for bounded or
    sublinear selections.
    """
    z = np.asarray(z_samples, dtype=float)
    if z.size < 10 or np.max(np.abs(z)) < 1e2:
        raise ValueError("need >= 10 samples spanning |z| up to 1e2")
    b = np.abs(_argmax_base(cost, U, z))
    absz = np.abs(z)
    top = (absz >= np.median(absz)) & (absz > 0)
    usable = top & (b > 0)
    if usable.sum() < 2:
        return 0.0, float(np.max(absz)), False
    alpha = float(np.polyfit(np.log(absz[usable]), np.log(b[usable]), 1)[0])
    c1 = float(np.min(b[usable] / absz[usable]))
    c2 = float(max(0.0, np.max(c1 * absz - b)))
    ok = alpha >= 0.95 and c1 >= 1e-6
    return c1, c2, ok


def check_full_range(cost: CostSpec, U: ControlSet, m=None) -> bool:
    """Heuristic probe of whether the selection map attains all of R.

    Bounded control sets report False immediately (with the attainable range
    logged). On the full line the probe requires the selection to keep
    growing, in both directions, along z = +-10^k up to 10^6.
    """
    if U.kind == "interval":
        log.info("full range check: interval control, attainable range [%g, %g]", U.lo, U.hi)
        return False
    if U.kind == "finite_grid":
        log.info(
            "full range check: finite control grid, attainable range [%g, %g]",
            U.points[0], U.points[-1],
        )
        return False
    probes = 10.0 ** np.arange(0, 7)
    try:
        b_pos = _argmax_base(cost, U, probes)
        b_neg = _argmax_base(cost, U, -probes)
    except DivergentHamiltonianError:
        return False
    growing = bool(
        np.all(np.diff(b_pos) > 0)
        and np.all(np.diff(b_neg) < 0)
        and b_pos[-1] > 1.05 * b_pos[-2]
        and b_neg[-1] < 1.05 * b_neg[-2]
    )
    if not growing:
        log.info("full range check: selection saturates near [%g, %g]", b_neg[-1], b_pos[-1])
    return growing
