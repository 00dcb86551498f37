"""LDPC codes with sub-block locality: density evolution, thresholds,
capacity-approaching constructions, joint-access scheduling, finite-length
ML bounds, and Monte Carlo decoding simulation on the binary erasure
channel."""

from .ensembles import (
    DegreePolynomial,
    JointEnsemble,
    LocalEnsemble,
    SubblockEnsemble,
    design_rate,
    design_rate_regular,
    edge_to_node,
    ensemble_from_json,
    ensemble_to_json,
    evaluate,
    monomial,
    node_to_edge,
    regular_ensemble,
)
from .density_evolution import (
    DeTrace,
    epsilon_loc,
    f_map,
    g_map,
    local_threshold,
    reduces_to_1d,
    run_1d_de,
    run_2d_de,
)
from .threshold_solver import (
    FixedPoint,
    ThresholdReport,
    find_fixed_points,
    global_threshold,
    q_j,
    q_l,
    q_of_y,
    threshold_by_bisection,
)

__version__ = "0.1.0"
