"""riskineq: Bayesian mortality-risk estimation and risk-inequality analysis."""

__version__ = "0.1.0"

from .base import (
    AdjustmentError,
    AnovaError,
    DataValidationError,
    DensityError,
    MeasureError,
    ModelSpecError,
    PosteriorFormatError,
    RiskIneqError,
    SamplerError,
    SplineError,
    UnknownFieldError,
)
from .config import ModelConfig, Settings
from .data import CovariateSchema, Dataset, SyntheticSpec, generate_synthetic, load_csv, select
from .measures import RiskDistribution, gini, measure_report, theil

__all__ = [
    "AdjustmentError",
    "AnovaError",
    "CovariateSchema",
    "DataValidationError",
    "Dataset",
    "DensityError",
    "MeasureError",
    "ModelConfig",
    "ModelSpecError",
    "PosteriorFormatError",
    "RiskDistribution",
    "RiskIneqError",
    "SamplerError",
    "Settings",
    "SplineError",
    "SyntheticSpec",
    "UnknownFieldError",
    "__version__",
    "generate_synthetic",
    "gini",
    "load_csv",
    "measure_report",
    "select",
    "theil",
]
