"""Bayesian identification of jump Markov linear systems.

A particle Gibbs sampler alternates between drawing a hybrid state
trajectory (through a conditioned forward filter with discrete-particle
mixture reduction and a backward pass) and drawing fresh system parameters
from conjugate Dirichlet / Matrix-Normal / Inverse-Wishart updates.
"""

from ._util import rng_stream
from .analysis import (
    ChainSummary,
    FrequencyResponse,
    apply_relabeling,
    default_grid,
    frequency_response,
    relabel_sample,
    summarize,
)
from .backward import Trajectory, backward_smooth_step, sample_trajectory
from .conjugate import (
    ConjugateHyper,
    SufficientStats,
    posterior_hyperparams,
    sample_parameters,
    sufficient_stats,
)
from .distributions import (
    DirichletColumns,
    InverseWishartParams,
    MatrixNormalParams,
    log_mvn_pdf,
    sample_categorical,
    sample_dirichlet_columns,
    sample_inverse_wishart,
    sample_matrix_normal,
)
from .dpf import dpf_resample, dpf_threshold, systematic_sample
from .filtering import (
    FilterDegeneracyError,
    FilterHistory,
    forward_filter,
    kalman_correct,
    kalman_predict,
)
from .gibbs import (
    Chain,
    GibbsConfig,
    GibbsError,
    chain_diagnostics,
    chain_scalars,
    effective_sample_size,
    run_particle_gibbs,
)
from .mixtures import GaussianComponent, HybridMixture
from .model import (
    Dataset,
    DecorrelatedModel,
    HybridPrior,
    JmlsParams,
    ModelMatrices,
    decorrelate,
    simulate,
    validate_params,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "rng_stream",
    # model
    "ModelMatrices", "JmlsParams", "DecorrelatedModel", "Dataset", "HybridPrior",
    "validate_params", "decorrelate", "simulate",
    # distributions
    "MatrixNormalParams", "InverseWishartParams", "DirichletColumns",
    "log_mvn_pdf", "sample_matrix_normal", "sample_inverse_wishart",
    "sample_dirichlet_columns", "sample_categorical",
    # mixtures / filtering
    "GaussianComponent", "HybridMixture", "FilterHistory", "FilterDegeneracyError",
    "kalman_correct", "kalman_predict", "forward_filter",
    # dpf
    "dpf_threshold", "systematic_sample", "dpf_resample",
    # backward
    "Trajectory", "backward_smooth_step", "sample_trajectory",
    # conjugate
    "ConjugateHyper", "SufficientStats", "sufficient_stats",
    "posterior_hyperparams", "sample_parameters",
    # gibbs
    "GibbsConfig", "Chain", "GibbsError", "run_particle_gibbs",
    "chain_scalars", "chain_diagnostics", "effective_sample_size",
    # analysis
    "FrequencyResponse", "ChainSummary", "default_grid", "frequency_response",
    "relabel_sample", "apply_relabeling", "summarize",
]
