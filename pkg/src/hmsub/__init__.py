"""Robust row subsampling for large linear regressions, driven by pilot Huber losses."""

from hmsub.data import Dataset, RngSeed, SubsampleSelection, select_rows, validate_dataset
from hmsub.errors import (
    DatasetError,
    DegenerateScaleError,
    DimensionMismatchError,
    NonFiniteError,
    ProposalCapExceeded,
    SingularMatrixError,
)
from hmsub.huber import (
    FitResult,
    HuberConfig,
    empirical_gradient,
    empirical_loss,
    fit_huber_irls,
    fit_ols,
    fit_weighted_ols,
    huber_loss,
    huber_score,
    select_tau_grid,
    tau_rule_sigma,
)
from hmsub.samplers import (
    ProbabilityVector,
    SamplerSpec,
    acceptance_probability,
    gradient_probs,
    hms_sample,
    influence_probs,
    leverage_probs,
    leverage_scores,
    run_sampler,
    sample_uniform,
    sample_weighted,
    slev_probs,
)

__version__ = "0.1.0"
