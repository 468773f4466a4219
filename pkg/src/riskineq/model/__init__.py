"""Hierarchical logistic mortality-risk model."""

from .design import Design, ModelSpec, ParameterLayout, Parameters, interaction_pairs
from .posterior import (
    ParameterDraws,
    PosteriorRisks,
    load_posterior,
    posterior_mean_risks,
    save_posterior,
)
from .sampler import (
    FitDiagnostics,
    FitResult,
    fit,
    load_fit,
    log_likelihood,
    log_likelihood_grad,
    log_posterior,
    predict_risks,
    save_fit,
)

__all__ = [
    "Design",
    "FitDiagnostics",
    "FitResult",
    "ModelSpec",
    "ParameterDraws",
    "ParameterLayout",
    "Parameters",
    "PosteriorRisks",
    "fit",
    "interaction_pairs",
    "load_fit",
    "load_posterior",
    "log_likelihood",
    "log_likelihood_grad",
    "log_posterior",
    "posterior_mean_risks",
    "predict_risks",
    "save_fit",
    "save_posterior",
]
