"""Shared primitives: the exception hierarchy and posterior summaries."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, MutableMapping, Optional, Sequence, TypeVar

import numpy as np

logger = logging.getLogger(__name__)

T = TypeVar("T")


class RiskIneqError(Exception):
    """Base exception for the package."""


class DataValidationError(RiskIneqError):
    """Raised when input data violates the schema or the nesting structure."""

    def __init__(self, message: str, *, row: Optional[int] = None, field: Optional[str] = None) -> None:
        self.row = row
        self.field = field
        location = []
        if row is not None:
            location.append(f"row {row}")
        if field is not None:
            location.append(f"field '{field}'")
        prefix = f"{', '.join(location)}: " if location else ""
        super().__init__(f"{prefix}{message}")


class UnknownFieldError(DataValidationError):
    """Raised when a predicate or labeling references a field the schema does not declare."""


class SplineError(RiskIneqError):
    """Raised when a spline basis cannot be built from the given values."""


class ModelSpecError(RiskIneqError):
    """Raised when a model specification or parameter vector is inconsistent."""


class SamplerError(RiskIneqError):
    """Raised when an MCMC block fails: a non-finite state or a singular matrix."""

    def __init__(self, message: str, *, chain: int, iteration: int, block: str) -> None:
        self.chain = chain
        self.iteration = iteration
        self.block = block
        super().__init__(f"chain {chain}, iteration {iteration}, block '{block}': {message}")


class MeasureError(RiskIneqError):
    """Raised when an inequality measure is undefined for the input."""


class DensityError(RiskIneqError):
    """Raised for degenerate density inputs or mismatched grids."""


class AdjustmentError(RiskIneqError):
    """Raised when a counterfactual adjustment cannot be constructed."""


class AnovaError(RiskIneqError):
    """Raised when a variance decomposition is undefined."""


class PosteriorFormatError(RiskIneqError):
    """Raised when a persisted posterior file is malformed or does not match its dataset."""


VALIDATION_ERRORS = (DataValidationError, SplineError, ModelSpecError, ValueError)


@dataclass(frozen=True)
class PosteriorSummary:
    """Median and equal-tailed credible interval of a posterior sample."""

    median: float
    lo: float
    hi: float
    level: float = 0.95

    def as_dict(self) -> MutableMapping[str, float]:
        return {"median": self.median, "lo": self.lo, "hi": self.hi}


def summarize_draws(values: Sequence[float], level: float = 0.95) -> PosteriorSummary:
    """Summarize per-draw values as median and ``level`` equal-tailed interval."""

    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("Cannot summarize an empty posterior sample")
    tail = (1.0 - level) / 2.0 * 100.0
    lo, med, hi = np.percentile(arr, [tail, 50.0, 100.0 - tail])
    return PosteriorSummary(median=float(med), lo=float(lo), hi=float(hi), level=level)


def map_draws(fn: Callable[[int], T], n_draws: int, workers: int = 1) -> List[T]:
    """Apply ``fn`` to every draw index, optionally on a thread pool.

    Results come back in draw order whatever the worker count.
    """

    if workers <= 1 or n_draws <= 1:
        return [fn(ell) for ell in range(n_draws)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n_draws)))
