"""Bayesian Boolean matrix factorisation with a parallel Metropolised Gibbs sampler.

A binary data matrix is modelled as the Boolean product of two low-rank
binary factor matrices, observed through a global bit-flip noise level.
Posterior inference runs over both factors with the noise level maximised
after every sweep; missing cells are handled by a three-valued encoding
that simply drops them from the likelihood.
"""

from .core import (
    LAMBDA_MAX,
    BernoulliPrior,
    DegenerateError,
    Dispersion,
    FactorMatrix,
    ObservedMatrix,
    boolean_product,
    count_correct,
    deterministic_residual,
    log_likelihood,
    logit,
    sigmoid,
)
from .datagen import (
    DigitsDataset,
    MaskedSplit,
    SyntheticSpec,
    apply_bitflip_noise,
    calculator_digits,
    density_to_bernoulli,
    empirical_bayes_prior,
    gen_random_boolean,
    mask_random,
)
from .multilayer import Architecture, LayerStack, StackSchedule, feed_forward, impute, train_stack
from .predict import (
    CalibrationSplit,
    PredictionReport,
    calibration_split,
    predict_mc,
    predict_plugin,
    reconstruction_error,
    roc_auc,
    roc_curve,
)
from .sampler import (
    PosteriorSummary,
    PosteriorTrace,
    SamplerConfig,
    SamplerState,
    conditional_score,
    conditional_score_code,
    flip_probability,
    run,
    set_threads,
    sweep,
    update_lambda,
    update_row,
)

__version__ = "0.1.0"

__all__ = [
    "LAMBDA_MAX",
    "Architecture",
    "BernoulliPrior",
    "CalibrationSplit",
    "DegenerateError",
    "DigitsDataset",
    "Dispersion",
    "FactorMatrix",
    "LayerStack",
    "MaskedSplit",
    "ObservedMatrix",
    "PosteriorSummary",
    "PosteriorTrace",
    "PredictionReport",
    "SamplerConfig",
    "SamplerState",
    "StackSchedule",
    "SyntheticSpec",
    "apply_bitflip_noise",
    "boolean_product",
    "calculator_digits",
    "calibration_split",
    "conditional_score",
    "conditional_score_code",
    "count_correct",
    "density_to_bernoulli",
    "deterministic_residual",
    "empirical_bayes_prior",
    "feed_forward",
    "flip_probability",
    "gen_random_boolean",
    "impute",
    "log_likelihood",
    "logit",
    "mask_random",
    "predict_mc",
    "predict_plugin",
    "reconstruction_error",
    "roc_auc",
    "roc_curve",
    "run",
    "set_threads",
    "sigmoid",
    "sweep",
    "train_stack",
    "update_lambda",
    "update_row",
]
