"""Nonparametric generative sampling via entropically coupled Langevin chains.

The package fits a symmetric entropic coupling over training samples,
exposes conditional-mean/covariance queries, and runs stable discrete-time
Langevin samplers (direct and split-step, data-aware and constant noise),
plus conditional, potential-tilted, closure-modelling and trajectory
workflows with quantitative diagnostics.
"""

from .bridge import (
    BridgeModel,
    ConvergenceError,
    ProbabilityVector,
    load_model,
    save_model,
    sinkhorn_fit,
    sinkhorn_scaling,
)
from .conditional import (
    ClosureModel,
    ConditionalSpec,
    PotentialSpec,
    bayesian_chain,
    clamped_split_step,
    conditional_chain,
    extract_closure_samples,
    regularized_minimize,
    surrogate_simulate,
    trajectory_generate,
)
from .datasets import (
    IntegrationError,
    OdeSystem,
    gaussian_ring,
    hyper_semisphere,
    integrate_ode,
    lorenz63,
    multiscale_l63,
    singular_gaussian_2d,
)
from .evaluation import (
    OtConfig,
    OtResult,
    count_modes,
    empirical_cdf,
    entropic_ot,
    histogram,
    ks_statistic,
    marginal_ot_1d,
)
from .kernel import (
    DegenerateDataError,
    DensityEstimate,
    KernelSpec,
    TrainingSet,
    bandwidth_profile,
    fit_kde,
    kernel_matrix,
    kernel_vector,
    variable_bandwidth_spec,
)
from .sampler import (
    ChainOutput,
    SamplerConfig,
    psd_sqrt,
    run_chain,
    step_aware_direct,
    step_aware_split,
    step_unaware_direct,
    step_unaware_split,
)
from .experiments import run_experiment

__version__ = "0.1.0"
