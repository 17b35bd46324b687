import math

import numpy as np
import pytest

from mfgplan.hamiltonian import (
    ControlSet,
    Cost2Spec,
    CostSpec,
    DivergentHamiltonianError,
    FullRangeError,
    argmax_selection,
    check_full_range,
    check_quadratic_growth,
    hamiltonian2_eval,
    hamiltonian_eval,
    invert_drift_to_z,
)
from mfgplan.measures import EmpiricalMeasure, GridSpec, parse_measure_spec

from oracles import argmax_grid_search, solve_power_foc

QUAD = CostSpec.quadratic()
R = ControlSet.reals()
ZERO_COST = CostSpec.power(p=2, lam=0.0)


class TestHamiltonianEval:
    def test_quadratic_legendre(self):
        assert hamiltonian_eval(QUAD, R, 2.0) == pytest.approx(2.0)
        assert argmax_selection(QUAD, R, 2.0) == pytest.approx(2.0)

    def test_zero_cost_on_interval(self):
        u = ControlSet.interval(-1, 1)
        assert hamiltonian_eval(ZERO_COST, u, -3.0) == pytest.approx(3.0)
        assert argmax_selection(ZERO_COST, u, -3.0) == -1.0

    def test_abs_cost_table(self):
        cost = CostSpec.table([-1, 0, 1], [1, 0, 1])  # c(b) = |b|
        # oracle: brute force over the three grid points
        best = max((b * 0.5 - abs(b), b) for b in (-1, 0, 1))
        assert best[1] == 0
        assert hamiltonian_eval(cost, R, 0.5) == pytest.approx(0.0)
        assert argmax_selection(cost, R, 0.5) == 0.0

    def test_divergent_sup(self):
        with pytest.raises(DivergentHamiltonianError):
            hamiltonian_eval(ZERO_COST, R, 1.0)

    def test_mean_field_term_shifts(self):
        m = parse_measure_spec("gaussian:0,1", GridSpec(-8, 8, 641))
        cost = CostSpec.quadratic(mf_kind="second_moment", kappa=2.0)
        plain = hamiltonian_eval(QUAD, R, 1.5)
        assert hamiltonian_eval(cost, R, 1.5, m) == pytest.approx(plain - 2.0 * m.second_moment())

    def test_power_matches_grid_search(self):
        cost = CostSpec.power(p=3, lam=0.7)
        for z in (-4.0, -0.3, 0.0, 1.2, 9.0):
            oracle = argmax_grid_search(lambda b: 0.7 * np.abs(b) ** 3 / 3, z, lo=-10, hi=10)
            assert argmax_selection(cost, R, z) == pytest.approx(oracle, abs=1e-4)


class TestArgmaxSelection:
    def test_quadratic_identity(self):
        for z in (-3.0, 0.0, 0.7):
            assert argmax_selection(QUAD, R, z) == pytest.approx(z)

    def test_tie_break_at_zero(self):
        u = ControlSet.interval(-1, 1)
        assert argmax_selection(ZERO_COST, u, 0.0) == 0.0

    def test_tie_break_prefers_negative_on_equal_abs(self):
        u = ControlSet.finite([-1, 1])  # zero cost, both points optimal at z=0
        assert argmax_selection(ZERO_COST, u, 0.0) == -1.0

    def test_power_root(self):
        cost = CostSpec.power(p=4, lam=1.0)
        # oracle: bisection on the first-order condition z = lam b^3
        assert argmax_selection(cost, R, 8.0) == pytest.approx(solve_power_foc(8.0, 4, 1.0), abs=1e-9)
        assert argmax_selection(cost, R, 8.0) == pytest.approx(2.0, abs=1e-12)

    def test_interval_clamps(self):
        u = ControlSet.interval(-0.5, 0.5)
        assert argmax_selection(QUAD, u, 3.0) == 0.5
        assert argmax_selection(QUAD, u, -3.0) == -0.5

    def test_fenchel_young_equality(self):
        z = 1.3
        b_hat = argmax_selection(QUAD, R, z)
        h = hamiltonian_eval(QUAD, R, z)
        assert b_hat * z - float(QUAD.base(b_hat)) == pytest.approx(h, abs=1e-10)


class TestInvert:
    def test_quadratic_self_dual(self):
        assert invert_drift_to_z(QUAD, R, 1.7) == pytest.approx(1.7)

    def test_power_cubic(self):
        cost = CostSpec.power(p=4, lam=1.0)
        assert invert_drift_to_z(cost, R, 2.0) == pytest.approx(8.0)

    def test_table_round_trip(self):
        cost = CostSpec.table([-2, -1, 0, 1, 2], [2.0, 0.7, 0.0, 0.9, 2.5])
        for b in (-2.0, -1.0, 0.0, 1.0, 2.0):
            z = invert_drift_to_z(cost, R, b)
            assert argmax_selection(cost, R, z) == b

    def test_out_of_range_raises(self):
        u = ControlSet.interval(-1, 1)
        with pytest.raises(FullRangeError):
            invert_drift_to_z(QUAD, u, 2.0)
        with pytest.raises(FullRangeError):
            invert_drift_to_z(CostSpec.table([-1, 0, 1], [1, 0, 1]), R, 0.5)

    def test_duality_round_trip_smooth(self):
        cost = CostSpec.power(p=3, lam=2.0)
        for z in np.linspace(-5, 5, 21):
            b = argmax_selection(cost, R, z)
            assert invert_drift_to_z(cost, R, b) == pytest.approx(z, abs=1e-6)

    def test_vectorized(self):
        betas = np.linspace(-2, 2, 9)
        zs = invert_drift_to_z(QUAD, R, betas)
        assert np.allclose(zs, betas)


class TestSecondOrder:
    def test_point_mass(self):
        m = parse_measure_spec("point:0", GridSpec(-5, 5, 201))
        h, a = hamiltonian2_eval(Cost2Spec(), 0.0, 2.0, m)
        assert h == pytest.approx(1.0)
        assert a == pytest.approx(2.0)

    def test_standard_gaussian(self):
        m = parse_measure_spec("gaussian:0,1", GridSpec(-8, 8, 1281))
        c_m = Cost2Spec().c_m(m)
        assert c_m == pytest.approx(2.0, abs=1e-3)
        h, a = hamiltonian2_eval(Cost2Spec(), 0.0, 4.0, m)
        assert h == pytest.approx(4.0 / c_m, rel=1e-12)
        assert a == pytest.approx(4.0 / c_m, rel=1e-12)

    def test_zero_and_negative_gamma(self):
        m = parse_measure_spec("point:0", GridSpec(-5, 5, 201))
        assert hamiltonian2_eval(Cost2Spec(), 0.0, 0.0, m) == (0.0, 0.0)
        assert hamiltonian2_eval(Cost2Spec(), 0.0, -3.0, m) == (0.0, 0.0)

    def test_empirical_measure(self):
        m = EmpiricalMeasure(np.array([1.0, -1.0]))
        h, a = hamiltonian2_eval(Cost2Spec(), 0.0, 4.0, m)
        assert h == pytest.approx(16.0 / (4 * 2.0))
        assert a == pytest.approx(2.0)


class TestAssumptionProbes:
    Z_SAMPLES = np.concatenate([-np.logspace(-1, 2, 15), np.logspace(-1, 2, 15)])

    def test_quadratic_growth_quadratic_cost(self):
        c1, c2, ok = check_quadratic_growth(QUAD, R, self.Z_SAMPLES)
        assert ok
        assert c1 == pytest.approx(1.0)
        assert c2 == pytest.approx(0.0, abs=1e-12)

    def test_bounded_control_fails(self):
        c1, c2, ok = check_quadratic_growth(QUAD, ControlSet.interval(-1, 1), self.Z_SAMPLES)
        assert not ok

    def test_power_sublinear_fails(self):
        cost = CostSpec.power(p=4, lam=1.0)
        _, _, ok = check_quadratic_growth(cost, R, self.Z_SAMPLES)
        assert not ok

    def test_requires_enough_samples(self):
        with pytest.raises(ValueError):
            check_quadratic_growth(QUAD, R, [1.0, 2.0])

    def test_full_range(self):
        assert check_full_range(QUAD, R)
        assert check_full_range(CostSpec.power(p=4, lam=1.0), R)
        assert not check_full_range(QUAD, ControlSet.interval(-1, 1))
        assert not check_full_range(CostSpec.table([-1, 0, 1], [1, 0, 1]), ControlSet.finite([-1, 0, 1]))


class TestProperties:
    def test_fenchel_young_inequality(self, rng):
        costs = [QUAD, CostSpec.power(p=3, lam=0.5), CostSpec.power(p=1.5, lam=2.0)]
        for cost in costs:
            zs = rng.uniform(-8, 8, 300)
            bs = rng.uniform(-8, 8, 300)
            h = np.array([hamiltonian_eval(cost, R, z) for z in zs])
            lhs = bs * zs
            rhs = np.asarray(cost.base(bs)) + h
            assert np.all(lhs <= rhs + 1e-9)
            b_hat = np.array([argmax_selection(cost, R, z) for z in zs])
            eq = b_hat * zs - np.asarray(cost.base(b_hat))
            assert np.abs(eq - h).max() < 1e-9

    def test_midpoint_convexity(self, rng):
        cost = CostSpec.power(p=3, lam=1.0)
        for _ in range(200):
            z1, z2 = rng.uniform(-6, 6, 2)
            h1 = hamiltonian_eval(cost, R, z1)
            h2 = hamiltonian_eval(cost, R, z2)
            hm = hamiltonian_eval(cost, R, 0.5 * (z1 + z2))
            assert hm <= 0.5 * (h1 + h2) + 1e-9


class TestParsing:
    def test_control_parse(self):
        assert ControlSet.parse("R").kind == "all"
        u = ControlSet.parse("interval:-2,3")
        assert (u.lo, u.hi) == (-2.0, 3.0)

    def test_control_grid_csv(self, tmp_path):
        p = tmp_path / "u.csv"
        p.write_text("b\n-1\n0\n1\n")
        u = ControlSet.parse(f"grid:{p}")
        assert u.points == (-1.0, 0.0, 1.0)

    def test_cost_parse(self):
        c = CostSpec.parse("power:3,0.5", "second_moment:1.5")
        assert (c.kind, c.p, c.lam, c.kappa) == ("power", 3.0, 0.5, 1.5)
        assert CostSpec.parse("quadratic").kind == "quadratic"

    def test_cost_table_csv(self, tmp_path):
        p = tmp_path / "c.csv"
        p.write_text("b,cost\n-1,1\n0,0\n1,1\n")
        c = CostSpec.parse(f"table:{p}")
        assert c.table_points == (-1.0, 0.0, 1.0)

    def test_table_convexity_enforced(self):
        with pytest.raises(ValueError, match="convex"):
            CostSpec.table([-1, 0, 1], [0.0, 1.0, 0.0])

    def test_power_validation(self):
        with pytest.raises(ValueError):
            CostSpec.power(p=1.0, lam=1.0)
