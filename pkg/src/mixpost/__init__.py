"""Posterior on the number of components in a Bayesian normal mixture.

Weights and component parameters are integrated out analytically; samplers
move only on allocation vectors, and marginal likelihoods of k-component
models are recovered from the frequencies of empty-component patterns.
"""

from .core import (
    LOG_2PI,
    AllocationState,
    ModelSpec,
    OccupancyPattern,
    log_allocation_prior,
    log_component_marginal,
    log_data_marginal,
    log_joint,
    log_predictive,
    log_prior_rescale,
    occupancy_pattern,
)
from .datasets import TOY_NAMES, galaxy_path, load_galaxy, toy_data
from .estimators import (
    BayesFactor,
    MarlikResult,
    PriorOnK,
    SupCheck,
    bayes_factor_empty,
    bf_chain,
    check_sup_property,
    fdagger_sequence,
    fstar_sequence,
    hypothetical_ratio_table,
    mc_standard_error,
    posterior_bounds,
    posterior_over_k,
    prior_poisson1,
    prior_uniform,
)
from .oracle import (
    EnumerationResult,
    QuadMarginal,
    enumerate_exact,
    exact_posterior_k,
    identity_checks,
    quad_component_marginal,
    quadrature_checks,
)
from .samplers import (
    ChainConfig,
    ChainSummary,
    HyperRunResult,
    HyperState,
    HyperTable,
    SuggestedHyper,
    VarkResult,
    default_delta_upper,
    full_conditional_logweights,
    gibbs_sweep_fixed_k,
    hyper_median_table,
    mh_update_hyper,
    run_all_k_chains,
    run_fixed_k_chain,
    run_vark_chain,
    run_vark_hyper_chain,
    suggest_hyper,
    vark_sweep,
)

__version__ = "0.1.0"
