"""Gaussian wave functions on regular trees and the independent sets they induce."""

from treewave.wavefield import (
    CouplingConstants,
    CovarianceSequence,
    WaveSample,
    coupling_constants,
    covariance_sequence,
    extend_leaf,
    sample_ball,
    sample_balls,
    sample_root_edge,
)
from treewave.linfactor import (
    FactorCoefficients,
    alpha_coefficients,
    apply_factor,
    beta_sequence,
    factor_covariance,
)
from treewave.percolation import (
    Certificate,
    certify_finite_components,
    f_of_d1,
    f_prime,
    percolation_density,
)
from treewave.quadrature import (
    DerivativeBounds,
    ErrorBudget,
    GridTable,
    build_grid,
    error_budget,
    f0_eval,
    final_bound,
    integrate_p_prime,
    p_from_p_prime,
)
from treewave.indepset import (
    ComponentParams,
    ComponentReport,
    bipartite_theorem_constant,
    combine_bound,
    estimate_inclusion,
    explore_component,
    first_approach_size,
    orthant_prob3,
    simulate_components,
    tau_zero_bound,
)

__version__ = "0.1.0"
