import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mfgplan import (
    DriftField,
    GridSpec,
    TimeGrid,
    build_reference,
    parse_measure_spec,
    sinkhorn_solve,
)
from mfgplan.schrodinger import wiener_coupling


@pytest.fixture(scope="session")
def translate_coupling():
    """point:0 -> N(1,1); zeta(0, y) = exp(y - 1/2), constant unit drift."""
    gx = GridSpec(-5, 5, 201)
    gy = GridSpec(-7, 9, 641)
    mu0 = parse_measure_spec("point:0", gx)
    mu1 = parse_measure_spec("gaussian:1,1", gy)
    return sinkhorn_solve(build_reference(mu0, gy), mu1, tol=1e-10)


@pytest.fixture(scope="session")
def translate_field(translate_coupling):
    return DriftField(translate_coupling)


@pytest.fixture(scope="session")
def wiener_field():
    """gaussian:0,1 with the target equal to its own heat marginal: zeta == 1."""
    gx = GridSpec(-5, 5, 201)
    gy = GridSpec(-10, 10, 801)
    mu0 = parse_measure_spec("gaussian:0,1", gx)
    return DriftField(wiener_coupling(mu0, gy))


@pytest.fixture(scope="session")
def twoatom_coupling():
    """point:0 -> (delta_-1 + delta_1)/2 on a grid with nodes at the atoms."""
    gx = GridSpec(-5, 5, 201)
    gy = GridSpec(-5, 5, 251)
    mu0 = parse_measure_spec("point:0", gx)
    mu1 = parse_measure_spec("twopoint:-1,1,0.5", gy)
    return sinkhorn_solve(build_reference(mu0, gy), mu1, tol=1e-12)


@pytest.fixture(scope="session")
def generic_coupling():
    """gaussian:0,0.5 -> gaussian:0,1.2, a smooth non-trivial bridge."""
    gx = GridSpec(-3, 3, 241)
    gy = GridSpec(-6, 6, 481)
    mu0 = parse_measure_spec("gaussian:0,0.5", gx)
    mu1 = parse_measure_spec("gaussian:0,1.2", gy)
    return sinkhorn_solve(build_reference(mu0, gy), mu1, tol=1e-10)


@pytest.fixture(scope="session")
def small_time_grid():
    return TimeGrid(100)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
