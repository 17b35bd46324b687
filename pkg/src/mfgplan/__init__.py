"""Entropic planning for path-dependent mean field games.

Builds the minimum-entropy coupling between two marginals against the Wiener
reference, synthesizes the equilibrium drift and incentive functionals,
simulates the equilibrium ensemble, and certifies the planning identities.
"""

from .bass import BassModel, bass_build, bass_simulate, simulate_brownian, time_change_embed
from .config import RunConfig, load_config
from .drift import DriftField
from .hamiltonian import (
    ControlSet,
    Cost2Spec,
    CostSpec,
    argmax_selection,
    check_full_range,
    check_quadratic_growth,
    hamiltonian2_eval,
    hamiltonian_eval,
    invert_drift_to_z,
)
from .incentive import (
    IncentiveValues,
    ObjectiveResult,
    incentive_drift,
    incentive_lq,
    incentive_second_order,
    objective_j,
)
from .measures import (
    EmpiricalMeasure,
    GridMeasure,
    GridSpec,
    heat_convolve,
    ks_statistic,
    parse_measure_spec,
    quantile,
    wasserstein1,
)
from .schrodinger import (
    Coupling,
    ReferenceCoupling,
    build_reference,
    coupling_entropy,
    integrability_diagnostics,
    sinkhorn_solve,
)
from .simulate import (
    PathEnsemble,
    TimeGrid,
    empirical_flow,
    simulate_equilibrium,
    simulate_perturbed,
)
from .verify import (
    EntropyResult,
    GapResult,
    PlanningResult,
    VerificationReport,
    entropy_consistency,
    full_report,
    optimality_gap_check,
    planning_check,
    run_pipeline,
)

__version__ = "0.1.0"
