"""B-spline expansions for numeric covariates."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Dict, Mapping, Tuple, Union

import numpy as np
from scipy.interpolate import BSpline

from .base import SplineError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SplineBasis:
    degree: int
    interior_knots: Tuple[float, ...]
    boundary_knots: Tuple[float, float]

    def __post_init__(self) -> None:
        lo, hi = self.boundary_knots
        if self.degree < 1:
            raise SplineError("spline degree must be at least 1")
        if not lo < hi:
            raise SplineError(f"boundary knots must be increasing, got {self.boundary_knots}")
        knots = np.asarray(self.interior_knots, dtype=float)
        if knots.size and (np.any(np.diff(knots) <= 0) or knots[0] <= lo or knots[-1] >= hi):
            raise SplineError("interior knots must be strictly increasing and strictly inside the boundary")

    @property
    def basis_dim(self) -> int:
        return len(self.interior_knots) + self.degree + 1

    @property
    def knot_vector(self) -> np.ndarray:
        lo, hi = self.boundary_knots
        return np.concatenate([
            np.repeat(lo, self.degree + 1),
            np.asarray(self.interior_knots, dtype=float),
            np.repeat(hi, self.degree + 1),
        ])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "degree": self.degree,
            "interior_knots": list(self.interior_knots),
            "boundary_knots": list(self.boundary_knots),
        }

    @classmethod
    def from_dict(cls, payload: Mapping[str, Any]) -> "SplineBasis":
        return cls(
            degree=int(payload["degree"]),
            interior_knots=tuple(float(k) for k in payload["interior_knots"]),
            boundary_knots=(float(payload["boundary_knots"][0]), float(payload["boundary_knots"][1])),
        )


def build_basis(values: np.ndarray, degree: int = 3, n_interior_knots: int = 3) -> Tuple[SplineBasis, np.ndarray]:
    """Place interior knots at equally spaced quantiles of ``values`` and evaluate the basis there.

    Returns the basis and an ``(n, basis_dim)`` design block.
    """

    x = np.asarray(values, dtype=float)
    if x.ndim != 1 or x.size == 0 or not np.all(np.isfinite(x)):
        raise SplineError("spline input must be a non-empty finite vector")
    if degree < 1:
        raise SplineError("spline degree must be at least 1")
    if n_interior_knots < 0:
        raise SplineError("number of interior knots must be nonnegative")
    distinct = np.unique(x)
    if distinct.size < 2:
        raise SplineError("cannot build a spline basis on a constant vector")
    if distinct.size < n_interior_knots + 2:
        raise SplineError(
            f"{distinct.size} distinct values cannot support {n_interior_knots} interior knots"
        )

    lo, hi = float(distinct[0]), float(distinct[-1])
    probs = np.arange(1, n_interior_knots + 1) / (n_interior_knots + 1)
    knots = np.quantile(x, probs)
    if knots.size and (np.any(np.diff(knots) <= 0) or knots[0] <= lo or knots[-1] >= hi):
        # heavy ties: place knots on quantiles of the distinct values instead
        logger.info("Tied quantile knots; using quantiles of %d distinct values", distinct.size)
        knots = np.quantile(distinct, probs)

    basis = SplineBasis(degree=degree, interior_knots=tuple(float(k) for k in knots), boundary_knots=(lo, hi))
    return basis, _evaluate(basis, x)


def evaluate(basis: SplineBasis, x: Union[float, np.ndarray]) -> np.ndarray:
    """Evaluate the basis at ``x``; values outside the boundary are clamped with a warning.

    A scalar returns one row of length ``basis_dim``, a vector an ``(n, basis_dim)`` block.
    """

    arr = np.asarray(x, dtype=float)
    lo, hi = basis.boundary_knots
    outside = (arr < lo) | (arr > hi)
    if np.any(outside):
        logger.warning(
            "Clamping %d value(s) outside spline boundary [%g, %g]", int(np.count_nonzero(outside)), lo, hi
        )
    rows = _evaluate(basis, np.atleast_1d(arr))
    return rows[0] if arr.ndim == 0 else rows


def _evaluate(basis: SplineBasis, x: np.ndarray) -> np.ndarray:
    lo, hi = basis.boundary_knots
    clamped = np.clip(x, lo, hi)
    spline = BSpline(basis.knot_vector, np.eye(basis.basis_dim), basis.degree, extrapolate=True)
    rows = spline(clamped)
    # round-off can leave tiny negatives near knots
    return np.clip(rows, 0.0, None)
