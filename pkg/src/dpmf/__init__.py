"""Matrix factorization with latent feature functions under process priors.

Scalar latent features become functions of game covariates (time, venue)
with multi-task Gaussian process priors, inferred by slice-sampling MCMC,
and scored on a rolling censored prediction task.
"""

from .config import ExperimentConfig, load_config
from .data import Dataset, GameRecord, ingest
from .errors import (
    CholeskyError,
    DataFormatError,
    DimensionMismatchError,
    DpmfError,
    InvalidParameterError,
    InvalidStateError,
    SliceError,
)
from .kernels import (
    CovMatrix,
    KernelHyperparams,
    ard_corr,
    build_cov_matrix,
    cholesky_with_jitter,
    periodic_corr,
    warp_time,
)
from .latent import (
    CrossCov,
    LatentState,
    ModelData,
    ModelShape,
    assemble_feature,
    build_model_data,
    compute_y,
    generate_synthetic,
    latent_y,
    softplus,
    unwhiten,
    whiten,
)
from .likelihood import (
    GameObservation,
    LikelihoodParams,
    loglik_pair,
    loglik_total,
    sample_pair,
)
from .prediction import (
    ExpertLine,
    MetricsResult,
    PredictiveMixture,
    expert_scores,
    gp_conditional,
    metrics,
    predict_game,
    rao_blackwell_logprob,
    winner_prob,
)
from .samplers import (
    ChainState,
    Priors,
    SliceConfig,
    ess_step,
    gibbs_sweep,
    slice_sample_1d,
    update_cross_cov_means_lik,
    update_hypers_whitened,
    update_latents,
)

__version__ = "0.1.0"

__all__ = [
    "ChainState",
    "CholeskyError",
    "CovMatrix",
    "CrossCov",
    "DataFormatError",
    "Dataset",
    "DimensionMismatchError",
    "DpmfError",
    "ExperimentConfig",
    "ExpertLine",
    "GameObservation",
    "GameRecord",
    "InvalidParameterError",
    "InvalidStateError",
    "KernelHyperparams",
    "LatentState",
    "LikelihoodParams",
    "MetricsResult",
    "ModelData",
    "ModelShape",
    "PredictiveMixture",
    "Priors",
    "SliceConfig",
    "SliceError",
    "ard_corr",
    "assemble_feature",
    "build_cov_matrix",
    "build_model_data",
    "cholesky_with_jitter",
    "compute_y",
    "ess_step",
    "expert_scores",
    "generate_synthetic",
    "gibbs_sweep",
    "gp_conditional",
    "ingest",
    "latent_y",
    "load_config",
    "loglik_pair",
    "loglik_total",
    "metrics",
    "periodic_corr",
    "predict_game",
    "rao_blackwell_logprob",
    "sample_pair",
    "slice_sample_1d",
    "softplus",
    "unwhiten",
    "update_cross_cov_means_lik",
    "update_hypers_whitened",
    "update_latents",
    "warp_time",
    "whiten",
    "winner_prob",
]
