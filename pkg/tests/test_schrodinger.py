import math

import numpy as np
import pytest
from scipy.special import logsumexp

from mfgplan.measures import GridMeasure, GridSpec, parse_measure_spec, wasserstein1
from mfgplan.schrodinger import (
    AbsoluteContinuityError,
    SinkhornError,
    build_reference,
    coupling_entropy,
    integrability_diagnostics,
    sinkhorn_solve,
    wiener_coupling,
)

from oracles import ipfp_multiplicative


def rebalanced(coupling, rng):
    """Feasible competitor: move mass around a random positive rectangle."""
    pi = coupling.pi()
    pos = np.argwhere(pi > 1e-9)
    while True:
        (i1, j1), (i2, j2) = pos[rng.choice(pos.shape[0], size=2, replace=False)]
        if i1 == i2 or j1 == j2:
            continue
        eps = 0.5 * min(pi[i1, j2], pi[i2, j1])
        if eps <= 0:
            continue
        out = pi.copy()
        out[i1, j1] += eps
        out[i2, j2] += eps
        out[i1, j2] -= eps
        out[i2, j1] -= eps
        return out


class TestReference:
    def test_point_mass_reference(self):
        gx = GridSpec(-5, 5, 201)
        gy = GridSpec(-6, 6, 481)
        mu0 = parse_measure_spec("point:0", gx)
        ref = build_reference(mu0, gy)
        marg = ref.second_marginal()
        assert wasserstein1(marg, parse_measure_spec("gaussian:0,1", gy)) < gy.spacing

    def test_gaussian_second_marginal(self):
        gx = GridSpec(-5, 5, 201)
        gy = GridSpec(-9, 9, 721)
        mu0 = parse_measure_spec("gaussian:0,1", gx)
        ref = build_reference(mu0, gy)
        target = parse_measure_spec("gaussian:0,1.4142135623730951", gy)
        assert wasserstein1(ref.second_marginal(), target) < 2 * gy.spacing

    def test_rows_normalized(self):
        gx = GridSpec(-2, 2, 41)
        gy = GridSpec(-8, 8, 321)
        ref = build_reference(parse_measure_spec("gaussian:0,0.5", gx), gy)
        row_mass = np.exp(logsumexp(ref.logK, axis=1))
        assert np.abs(row_mass - 1.0).max() < 1e-12

    def test_coverage_error(self):
        gx = GridSpec(-5, 5, 201)
        with pytest.raises(ValueError, match="loses"):
            build_reference(parse_measure_spec("gaussian:0,1", gx), GridSpec(-2, 2, 81))

    def test_marginal_fidelity_of_rho(self):
        gx = GridSpec(-3, 3, 121)
        gy = GridSpec(-8, 8, 321)
        mu0 = parse_measure_spec("gaussian:0,1", gx)
        ref = build_reference(mu0, gy)
        rho = np.exp(ref.log_rho)
        assert np.abs(rho.sum(axis=1) - mu0.w).max() < 1e-14


class TestSinkhorn:
    def test_fixed_point_when_target_is_wiener_marginal(self, wiener_field):
        c = wiener_field.coupling
        assert coupling_entropy(c) < 1e-8
        f, g = c.potentials
        pos = np.isfinite(f)
        assert np.ptp(f[pos]) < 1e-6 and np.ptp(g[np.isfinite(g)]) < 1e-6

    def test_point_to_translate_closed_form(self, translate_coupling):
        c = translate_coupling
        row = int(c.ref.x0_grid.nearest_index(0.0))
        lz = c.log_zeta()[row]
        ys = c.ref.x1_grid.nodes
        mask = np.isfinite(lz)
        # zeta(0, y) = exp(y - 1/2) up to grid quadrature error
        assert np.abs(lz[mask] - (ys[mask] - 0.5)).max() < 1e-3

    def test_matches_fine_grid_oracle(self, generic_coupling):
        c = generic_coupling
        gx4 = GridSpec(-3, 3, 961)
        gy4 = GridSpec(-6, 6, 1921)
        m0 = parse_measure_spec("gaussian:0,0.5", gx4)
        m1 = parse_measure_spec("gaussian:0,1.2", gy4)
        pi4 = ipfp_multiplicative(m0.w, gx4.nodes, m1.w, gy4.nodes, tol=1e-12)
        for x0 in (-1.0, 0.0, 1.0):
            base = c.conditional_law(int(c.ref.x0_grid.nearest_index(x0)))
            row = pi4[int(gx4.nearest_index(x0))]
            fine = GridMeasure(gy4, row / row.sum())
            assert wasserstein1(base, fine) < 3 * c.ref.x1_grid.spacing

    def test_marginal_fidelity(self, generic_coupling):
        c = generic_coupling
        pi = c.pi()
        assert np.abs(pi.sum(axis=1) - c.ref.mu0.w).sum() < 1e-10
        assert np.abs(pi.sum(axis=0) - c.mu1.w).sum() < 1e-10
        assert abs(pi.sum() - 1.0) < 1e-10

    def test_product_structure_of_zeta(self, generic_coupling):
        c = generic_coupling
        f, g = c.potentials
        lz = c.log_zeta()
        resid = lz - f[:, None] - g[None, :]
        assert np.nanmax(np.abs(resid[np.isfinite(resid)])) < 1e-12

    def test_symmetry_under_swap(self):
        g = GridSpec(-7, 7, 281)
        mu_a = parse_measure_spec("gaussian:0,1", g)
        mu_b = parse_measure_spec("gaussian:0.5,1.1", g)
        tol = 1e-9
        fwd = sinkhorn_solve(build_reference(mu_a, g), mu_b, tol=tol)
        bwd = sinkhorn_solve(build_reference(mu_b, g), mu_a, tol=tol)
        assert np.abs(fwd.pi() - bwd.pi().T).sum() < 10 * tol

    def test_entropy_optimality_against_rebalancing(self, generic_coupling, rng):
        c = generic_coupling
        rho = np.exp(c.ref.log_rho)
        h_star = coupling_entropy(c)
        for _ in range(5):
            pi2 = rebalanced(c, rng)
            mask = pi2 > 0
            h2 = float(np.sum(pi2[mask] * (np.log(pi2[mask]) - np.log(rho[mask]))))
            assert h2 >= h_star - 1e-9

    def test_nonconvergence_raises(self):
        gx = GridSpec(-1, 1, 21)
        gy = GridSpec(-8, 8, 161)
        mu0 = parse_measure_spec("gaussian:0,0.3", gx)
        mu1 = parse_measure_spec("gaussian:1,1.4", gy)
        with pytest.raises(SinkhornError) as err:
            sinkhorn_solve(build_reference(mu0, gy), mu1, tol=1e-300, max_iter=7)
        assert err.value.iterations == 7
        assert err.value.marginal_err > 0

    def test_zero_weight_columns_excluded(self, twoatom_coupling):
        c = twoatom_coupling
        _, g = c.potentials
        dead = c.mu1.w == 0
        assert np.all(np.isneginf(g[dead]))
        assert np.all(np.isfinite(g[~dead]))


class TestEntropy:
    def test_zero_for_reference(self, wiener_field):
        assert coupling_entropy(wiener_field.coupling) == pytest.approx(0.0, abs=1e-8)

    def test_translate_kl_half(self, translate_coupling):
        # KL(N(1,1) || N(0,1)) = 1/2
        assert coupling_entropy(translate_coupling) == pytest.approx(0.5, abs=1e-3)

    def test_monotone_under_tolerance_refinement(self):
        # IPFP starts from the reference (entropy 0) and climbs to the
        # optimum, so entropy is non-decreasing as the tolerance tightens
        # and stabilizes once converged.
        gx = GridSpec(-3, 3, 121)
        gy = GridSpec(-6, 6, 241)
        mu0 = parse_measure_spec("gaussian:0,0.5", gx)
        mu1 = parse_measure_spec("gaussian:0.4,1.1", gy)
        ref = build_reference(mu0, gy)
        hs = [coupling_entropy(sinkhorn_solve(ref, mu1, tol=tol))
              for tol in (1e-2, 1e-4, 1e-6, 1e-10)]
        assert all(b >= a - 1e-12 for a, b in zip(hs, hs[1:]))
        assert abs(hs[-1] - hs[-2]) < 1e-6

    def test_absolute_continuity_guard(self, translate_coupling):
        c = translate_coupling
        bad = object.__new__(type(c))
        for name, val in vars(c).items():
            object.__setattr__(bad, name, val)
        lp = np.array(c.log_pi)
        lp[c.ref.mu0.w == 0] = math.log(1e-30)  # mass on a zero-mass reference row
        object.__setattr__(bad, "log_pi", lp)
        with pytest.raises(AbsoluteContinuityError):
            coupling_entropy(bad)


class TestIntegrability:
    def test_reference_case(self, wiener_field):
        e_abs, e_sq = integrability_diagnostics(wiener_field.coupling)
        assert e_abs == pytest.approx(0.0, abs=1e-6)
        assert e_sq == pytest.approx(1.0, abs=1e-6)

    def test_translate_second_moment(self, translate_coupling):
        # E[zeta^2] = E[exp(2 X1 - 1)] = e under X1 ~ N(0,1)
        _, e_sq = integrability_diagnostics(translate_coupling)
        assert e_sq == pytest.approx(math.e, abs=1e-2)

    def test_jensen_lower_bound(self, generic_coupling, twoatom_coupling):
        for c in (generic_coupling, twoatom_coupling):
            _, e_sq = integrability_diagnostics(c)
            assert e_sq >= 1.0 - 1e-12

    def test_refinement_warning(self, caplog):
        gx = GridSpec(-5, 5, 101)
        mu0 = parse_measure_spec("point:0", gx)
        base = sinkhorn_solve(
            build_reference(mu0, GridSpec(-5, 5, 101)),
            parse_measure_spec("twopoint:-1,1,0.5", GridSpec(-5, 5, 101)),
            tol=1e-12,
        )
        fine = sinkhorn_solve(
            build_reference(mu0, GridSpec(-5, 5, 4001)),
            parse_measure_spec("twopoint:-1,1,0.5", GridSpec(-5, 5, 4001)),
            tol=1e-12,
        )
        with caplog.at_level("WARNING"):
            integrability_diagnostics(base, refined=fine)
        assert any("refinement" in r.message for r in caplog.records)


def test_wiener_coupling_helper():
    mu0 = parse_measure_spec("gaussian:0,1", GridSpec(-5, 5, 101))
    c = wiener_coupling(mu0, GridSpec(-10, 10, 401))
    assert coupling_entropy(c) < 1e-10
