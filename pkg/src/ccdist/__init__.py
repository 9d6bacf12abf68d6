"""The continuous categorical distribution on the simplex."""

from .core import (
    LogNormalizer,
    MeanParams,
    NaturalParams,
    SimplexPoint,
    covariance,
    kl_divergence,
    log_mgf,
    log_normalizer,
    log_normalizer_lambda,
    log_pdf,
    log_pdf_lambda,
    mean,
    mean_to_natural,
    mgf,
    mode,
    natural_to_mean,
)
from .errors import (
    BoundaryError,
    BudgetExceededError,
    CCError,
    DimensionError,
    ModeTieError,
    NonFiniteLossError,
)
from .inference import (
    BiasRow,
    Dataset,
    FitReport,
    GlmConfig,
    GlmModel,
    bias_simulation,
    fit_mle,
    glm_fit,
    glm_predict,
    simulate_glm,
)
from .samplers import (
    PermutationSetup,
    SampleBatch,
    benchmark_samplers,
    cb_inverse_cdf,
    choose_sampler,
    naive_acceptance_rate,
    reparam_jacobian,
    reparam_sample,
    sample,
    sample_naive,
    sample_ordered,
    sample_permutation,
)

__version__ = "0.1.0"
