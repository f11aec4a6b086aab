"""Recursive spectral surrogate models (stochastic spectral embedding).

Builds piecewise spectral approximations of expensive input-output maps from a
fixed experimental design: the input probability space is partitioned
recursively into equal-mass boxes in quantile space, and sparse orthonormal
polynomial expansions of the running residual are fitted locally.  The
flattened form gives O(depth) prediction and closed-form moments and
first-order Sobol indices.
"""

from .benchmarks import (
    BenchmarkCase,
    ConvergenceRecord,
    EstimatorAccuracy,
    case_registry,
    estimator_accuracy,
    get_case,
    model_1d,
    model_oscillator,
    model_truss,
    model_zhou,
    relative_mse,
    run_convergence,
)
from .core import (
    FlattenedSse,
    SseConfig,
    SseModel,
    Subdomain,
    choose_split_direction,
    default_n_min,
    deserialize,
    flatten,
    gen_error_estimate,
    load_model,
    mean,
    predict,
    save_model,
    serialize,
    train,
    variance,
)
from .input_model import (
    Gaussian,
    Gumbel,
    InputModel,
    Lognormal,
    Marginal,
    Uniform,
    input_model_from_spec,
    marginal_from_spec,
)
from .poly_basis import (
    Box,
    TruncationSet,
    eval_design_matrix,
    generate_truncation,
    legendre_orthonormal,
    unit_box,
)
from .regression import (
    Expansion,
    IllConditionedBasisError,
    adaptive_fit,
    ols_fit,
    sparse_select,
)
from .sensitivity import (
    PiecewisePoly1D,
    SobolResult,
    conditional_expectation_1d,
    first_order_partial_variance,
    first_order_sobol,
)

__version__ = "0.1.0"

__all__ = [
    "BenchmarkCase",
    "Box",
    "ConvergenceRecord",
    "EstimatorAccuracy",
    "Expansion",
    "FlattenedSse",
    "Gaussian",
    "Gumbel",
    "IllConditionedBasisError",
    "InputModel",
    "Lognormal",
    "Marginal",
    "PiecewisePoly1D",
    "SobolResult",
    "SseConfig",
    "SseModel",
    "Subdomain",
    "TruncationSet",
    "Uniform",
    "adaptive_fit",
    "case_registry",
    "choose_split_direction",
    "conditional_expectation_1d",
    "default_n_min",
    "deserialize",
    "estimator_accuracy",
    "eval_design_matrix",
    "first_order_partial_variance",
    "first_order_sobol",
    "flatten",
    "gen_error_estimate",
    "generate_truncation",
    "get_case",
    "input_model_from_spec",
    "legendre_orthonormal",
    "load_model",
    "marginal_from_spec",
    "mean",
    "model_1d",
    "model_oscillator",
    "model_truss",
    "model_zhou",
    "ols_fit",
    "predict",
    "relative_mse",
    "run_convergence",
    "save_model",
    "serialize",
    "sparse_select",
    "train",
    "unit_box",
    "variance",
]
