"""Linear jump-diffusion with unit jumps: simulation, inference, verification.

The model is X_t = x0 + theta*t + sigma*B_t + N_t - lambda*t observed on an
equidistant grid.  The package provides exact simulation with latent
increments, the exact transition density (a Poisson mixture of Gaussians)
with analytic scores, maximum-likelihood estimation, and Monte Carlo
harnesses that verify the Gaussian-shift limit of local log-likelihood
ratios, its exact term expansion, and the pathwise mismatch bounds.
"""

from .model import (
    ModelParams,
    Perturbation,
    SamplingGrid,
    GridScheme,
    LocalizedParams,
    fisher_matrix,
    rate_vector,
    localize,
    increment_moments,
    grid_sequence,
)
from .density import (
    TruncationPolicy,
    TruncationWindow,
    JumpPosterior,
    ScoreVector,
    DEFAULT_POLICY,
    log_sum_exp,
    truncation_window,
    log_transition_density,
    log_density_batch,
    jump_posterior,
    conditional_moment,
    score_vector,
    score_batch,
)
from .simulate import (
    SeedSpec,
    PathRecord,
    simulate_path,
    simulate_batch,
    write_path_csv,
    read_path_csv,
)
from .lan import (
    LanConfig,
    LanReport,
    LanRow,
    LimitCheckEntry,
    LimitCheckReport,
    TermDecomposition,
    log_likelihood,
    log_likelihood_ratio,
    lan_quadratic,
    decompose_terms,
    run_lan_experiment,
    limit_checks,
    ks_statistic,
)
from .bounds import (
    BoundsConfig,
    BoundsCheckReport,
    STable,
    MEstimate,
    DecayFit,
    perturbed_pair,
    s_jp,
    lemma_bounds_check,
    estimate_M,
    decay_fit,
)
from .mle import (
    OptimizerConfig,
    EstimateResult,
    RateRow,
    RateStudy,
    neg_log_likelihood_and_grad,
    init_moments,
    fit_mle,
    rate_study,
    JumpDiffusionMLE,
)

__version__ = "0.1.0"
